//! Reduced-order nonlinear solutions (RONS) for time-dependent PDEs.
//!
//! The parameters `q(t)` of a shape-morphing ansatz `û(x, q)` are evolved by
//! minimizing the instantaneous residual `‖û_t - F(û)‖`, optionally subject to
//! conserved quantities and with Tikhonov regularization. Two assembly
//! strategies are provided:
//!
//! * [`srons`]: closed-form inner-product kernels for Gaussian mixtures, where
//!   `K(K+3)/2` kernels build the metric tensor and right-hand side for any
//!   number of modes.
//! * [`crons`]: pointwise collocation of the residual, giving a rectangular
//!   least-squares system, plus the Monte Carlo normal-equation variant.
//!
//! [`solver`] solves for `q̇` in every regime, [`integrate`] advances `q(t)`
//! with explicit adaptive schemes, and [`oracles`] supplies independent
//! references (moment ODEs, pseudo-spectral DNS, quadrature).

pub mod ansatz;
pub mod crons;
pub mod error;
pub mod experiments;
pub mod integrate;
pub mod oracles;
pub mod pde;
pub mod solver;
pub mod srons;
pub mod verify;

pub use error::{Result, RonsError};

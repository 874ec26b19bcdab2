//! Independent references for the RONS solutions.

pub mod dns;
pub mod moments;
pub mod quadrature;

pub use dns::{DnsConfig, KsDns};
pub use moments::{density_moments, fp_moment_rhs, integrate_moments, mixture_moments, MomentState};
pub use quadrature::{
    gaussian_metric_quadrature, gaussian_rhs_quadrature, periodic_trapezoid, quadrature_inner_product,
    trapezoid_metric, GaussHermite, GaussHermiteTensor, Scheme,
};

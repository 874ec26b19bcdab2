use std::f64::consts::PI;

use super::{Ansatz, Domain};

/// Linear ansatz `û = Σ q_j u_j(x)` over fixed orthonormal Fourier modes on
/// `[-ℓ, ℓ)`: `u_0 = 1/√(2ℓ)`, then `sin(kπx/ℓ)/√ℓ`, `cos(kπx/ℓ)/√ℓ` for
/// `k = 1, 2, …`. One parameter per mode.
///
/// With this family the metric tensor is the identity and RONS reduces to
/// classical Galerkin projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierGalerkin {
    half_width: f64,
}

impl FourierGalerkin {
    pub fn new(half_width: f64) -> Self {
        assert!(half_width > 0.0);
        Self { half_width }
    }

    /// Wavenumber index and parity of basis function `j`.
    fn harmonic(j: usize) -> (usize, bool) {
        (j.div_ceil(2), j % 2 == 1)
    }

    /// Derivative of order `order` of basis function `j` at `x`.
    pub fn basis(&self, j: usize, x: f64, order: usize) -> f64 {
        let l = self.half_width;
        if j == 0 {
            return if order == 0 { 1.0 / (2.0 * l).sqrt() } else { 0.0 };
        }
        let (k, is_sin) = Self::harmonic(j);
        let kappa = k as f64 * PI / l;
        let theta = kappa * x;
        // d^n/dx^n sin(κx) = κ^n sin(κx + nπ/2)
        let shift = order as f64 * PI / 2.0;
        let base = if is_sin {
            (theta + shift).sin()
        } else {
            (theta + shift).cos()
        };
        kappa.powi(order as i32) * base / l.sqrt()
    }

    /// Eigenvalue of `d²/dx²` on basis function `j`.
    pub fn second_derivative_eigenvalue(&self, j: usize) -> f64 {
        let (k, _) = Self::harmonic(j);
        let kappa = k as f64 * PI / self.half_width;
        -kappa * kappa
    }

    /// Spatial derivative of order `order` of the expansion.
    pub fn x_derivative(&self, x: f64, q: &[f64], order: usize) -> f64 {
        q.iter()
            .enumerate()
            .map(|(j, qj)| qj * self.basis(j, x, order))
            .sum()
    }
}

impl Ansatz for FourierGalerkin {
    fn name(&self) -> &'static str {
        "fourier_galerkin"
    }

    fn dim(&self) -> usize {
        1
    }

    fn per_mode(&self) -> usize {
        1
    }

    fn domain(&self) -> Domain {
        Domain::Periodic {
            half_width: self.half_width,
        }
    }

    fn value(&self, x: &[f64], q: &[f64]) -> f64 {
        self.x_derivative(x[0], q, 0)
    }

    fn jacobian_into(&self, x: &[f64], _q: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.basis(j, x[0], 0);
        }
    }
}

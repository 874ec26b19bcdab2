//! Right-hand-side operators `F(û)` of `u_t = F(u)`.

use serde::{Deserialize, Serialize};

use crate::ansatz::{Ansatz, FourierGalerkin, GaussianMixture, ParameterState, TanhNetwork};
use crate::error::{Result, RonsError};

/// Pointwise evaluation of `F(û(·, q))` for one ansatz family.
pub trait PdeOperator<A: Ansatz + ?Sized>: Sync {
    /// `F(û)(x)` at time `t`. Pure in all arguments.
    fn rhs(&self, family: &A, x: &[f64], t: f64, q: &[f64]) -> f64;

    /// Whether `F` depends on `t` explicitly.
    fn time_dependent(&self) -> bool;

    /// Spatial-derivative orders of `û` the operator consumes.
    fn derivative_orders(&self) -> &'static [usize];
}

/// Harmonic trap position `a(t) = amplitude · (sin(ω t) + offset)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Forcing {
    pub amplitude: f64,
    pub angular_frequency: f64,
    pub offset: f64,
}

impl Forcing {
    pub fn constant(value: f64) -> Self {
        Self {
            amplitude: value,
            angular_frequency: 0.0,
            offset: 1.0,
        }
    }

    /// `a(t) = 1.25 (sin(πt) + 1.5)`.
    pub fn harmonic_trap() -> Self {
        Self {
            amplitude: 1.25,
            angular_frequency: std::f64::consts::PI,
            offset: 1.5,
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        self.amplitude * ((self.angular_frequency * t).sin() + self.offset)
    }
}

/// Fokker–Planck operator of `d` particles in a moving harmonic trap with
/// mean-field attraction:
///
/// `F(p) = Σ_i -∂_i[(a(t) - x_i + (α/d) Σ_j (x_j - x_i)) p] + ν ∂_i² p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FokkerPlanck {
    pub dim: usize,
    pub forcing: Forcing,
    /// Interaction strength `α`.
    pub interaction: f64,
    /// Diffusion constant `ν`.
    pub diffusion: f64,
}

impl FokkerPlanck {
    /// Parameters of the eight-particle harmonic-trap benchmark.
    pub fn harmonic_trap(dim: usize) -> Self {
        Self {
            dim,
            forcing: Forcing::harmonic_trap(),
            interaction: 0.25,
            diffusion: 0.01,
        }
    }

    /// Drift vector `b(x, t)`.
    pub fn drift(&self, x: &[f64], t: f64) -> Vec<f64> {
        let a = self.forcing.at(t);
        let mean_field = self.interaction / self.dim as f64 * x.iter().sum::<f64>();
        x.iter()
            .map(|xi| a - (1.0 + self.interaction) * xi + mean_field)
            .collect()
    }

    /// `-div b`, which is constant for this drift.
    pub fn drift_compression(&self) -> f64 {
        let d = self.dim as f64;
        d * (1.0 + self.interaction) - self.interaction
    }
}

impl PdeOperator<GaussianMixture> for FokkerPlanck {
    fn rhs(&self, family: &GaussianMixture, x: &[f64], t: f64, q: &[f64]) -> f64 {
        let der = family.derivatives(x, q);
        let b = self.drift(x, t);
        let advection: f64 = b.iter().zip(&der.gradient).map(|(bi, gi)| bi * gi).sum();
        self.drift_compression() * der.value - advection + self.diffusion * der.laplacian
    }

    fn time_dependent(&self) -> bool {
        self.forcing.angular_frequency != 0.0
    }

    fn derivative_orders(&self) -> &'static [usize] {
        &[0, 1, 2]
    }
}

/// Kuramoto–Sivashinsky operator `F(u) = -u u_x - u_xx - u_xxxx`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KuramotoSivashinsky;

impl PdeOperator<TanhNetwork> for KuramotoSivashinsky {
    fn rhs(&self, family: &TanhNetwork, x: &[f64], _t: f64, q: &[f64]) -> f64 {
        let d = family.x_derivatives(x[0], q);
        -d[0] * d[1] - d[2] - d[4]
    }

    fn time_dependent(&self) -> bool {
        false
    }

    fn derivative_orders(&self) -> &'static [usize] {
        &[0, 1, 2, 4]
    }
}

/// Heat equation `F(u) = κ u_xx`, used with the linear Galerkin family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatEquation {
    pub diffusivity: f64,
}

impl PdeOperator<FourierGalerkin> for HeatEquation {
    fn rhs(&self, family: &FourierGalerkin, x: &[f64], _t: f64, q: &[f64]) -> f64 {
        self.diffusivity * family.x_derivative(x[0], q, 2)
    }

    fn time_dependent(&self) -> bool {
        false
    }

    fn derivative_orders(&self) -> &'static [usize] {
        &[2]
    }
}

/// `F(û)(x, t)` for the Fokker–Planck operator with layout checks.
pub fn fokker_planck_rhs(
    pde: &FokkerPlanck,
    x: &[f64],
    t: f64,
    q: &ParameterState,
) -> Result<f64> {
    if x.len() != pde.dim {
        return Err(RonsError::Dimension {
            expected: pde.dim,
            got: x.len(),
        });
    }
    let family = GaussianMixture::new(pde.dim);
    family.validate(x, q.values())?;
    Ok(pde.rhs(&family, x, t, q.values()))
}

/// `F(û)(x)` for the Kuramoto–Sivashinsky operator with layout checks.
pub fn ks_rhs(family: &TanhNetwork, x: f64, q: &ParameterState) -> Result<f64> {
    family.validate(&[x], q.values())?;
    Ok(KuramotoSivashinsky.rhs(family, &[x], q.t, q.values()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Applies the Fokker–Planck operator by central differences of the
    /// mixture value only (flux form, no analytic derivatives).
    fn fd_operator(pde: &FokkerPlanck, family: &GaussianMixture, x: &[f64], t: f64, q: &[f64]) -> f64 {
        let h = 1e-4;
        let d = x.len();
        let flux = |y: &[f64], i: usize| pde.drift(y, t)[i] * family.value(y, q);
        let mut total = 0.0;
        for i in 0..d {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            total -= (flux(&xp, i) - flux(&xm, i)) / (2.0 * h);
            total += pde.diffusion
                * (family.value(&xp, q) - 2.0 * family.value(x, q) + family.value(&xm, q))
                / (h * h);
        }
        total
    }

    #[test]
    fn forcing_matches_trap_schedule() {
        let a = Forcing::harmonic_trap();
        assert!((a.at(0.0) - 1.875).abs() < 1e-15);
        assert!((a.at(0.5) - 1.25 * 2.5).abs() < 1e-12);
        assert_eq!(Forcing::constant(0.3).at(17.0), 0.3);
    }

    #[test]
    fn zero_amplitudes_give_zero_rhs() {
        let pde = FokkerPlanck::harmonic_trap(2);
        let q = ParameterState::from_modes(0.0, &[vec![0.0, 1.0, 0.3, 0.2]]).unwrap();
        assert_eq!(fokker_planck_rhs(&pde, &[0.1, 0.4], 0.7, &q).unwrap(), 0.0);
    }

    #[test]
    fn pure_contraction_matches_closed_form_and_differences() {
        // ν = 0, a = 0, α = 0: F(p) = div(x p) = (d - 2w²|x-c|²) p + x·∇p restricted form
        let pde = FokkerPlanck {
            dim: 3,
            forcing: Forcing::constant(0.0),
            interaction: 0.0,
            diffusion: 0.0,
        };
        let family = GaussianMixture::new(3);
        let (a, w, c) = (1.2, 0.8, [0.1, -0.3, 0.5]);
        let q = [a, w, c[0], c[1], c[2]];
        let x = [0.4, 0.2, -0.1];
        let p = family.value(&x, &q);
        let grad: Vec<f64> = (0..3).map(|k| -2.0 * w * w * (x[k] - c[k]) * p).collect();
        let closed = 3.0 * p + (0..3).map(|k| x[k] * grad[k]).sum::<f64>();
        let analytic = pde.rhs(&family, &x, 0.0, &q);
        assert!((analytic - closed).abs() < 1e-13);
        let fd = fd_operator(&pde, &family, &x, 0.0, &q);
        assert!((fd - analytic).abs() / analytic.abs() < 1e-6);
    }

    #[test]
    fn benchmark_state_matches_difference_operator() {
        let d = 8;
        let pde = FokkerPlanck::harmonic_trap(d);
        let family = GaussianMixture::new(d);
        let mu: Vec<f64> = (0..d).map(|i| 0.9 + 2.1 * i as f64 / 7.0).collect();
        let a2 = (2.0 * PI * 0.1f64).powi(-4) / 2.0;
        let mut q = Vec::new();
        for _ in 0..2 {
            q.push(a2.sqrt());
            q.push(5f64.sqrt());
            q.extend_from_slice(&mu);
        }
        // evaluate slightly off-center so every term contributes
        let x: Vec<f64> = mu.iter().enumerate().map(|(i, m)| m + 0.05 * (i as f64 - 3.5) / 3.5).collect();
        for point in [&mu, &x] {
            let analytic = pde.rhs(&family, point, 0.0, &q);
            let fd = fd_operator(&pde, &family, point, 0.0, &q);
            assert!(
                (fd - analytic).abs() / analytic.abs() < 1e-6,
                "analytic {analytic} vs fd {fd}"
            );
        }
    }

    #[test]
    fn ks_rhs_vanishes_for_zero_network() {
        let family = TanhNetwork::new(10.0).unwrap();
        let q = ParameterState::from_modes(0.0, &vec![vec![0.0, 1.0, 0.2, 0.3]; 3]).unwrap();
        assert_eq!(ks_rhs(&family, 1.3, &q).unwrap(), 0.0);
    }

    #[test]
    fn heat_rhs_scales_modes_by_eigenvalue() {
        let f = FourierGalerkin::new(PI);
        let heat = HeatEquation { diffusivity: 0.5 };
        let q = [0.0, 1.0, 0.0];
        let x = [0.3];
        let expected = 0.5 * f.second_derivative_eigenvalue(1) * f.basis(1, 0.3, 0);
        assert!((heat.rhs(&f, &x, 0.0, &q) - expected).abs() < 1e-14);
    }
}

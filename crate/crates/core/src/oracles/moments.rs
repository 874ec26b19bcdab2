//! Closed moment equations of the harmonic-trap SDE, and moments of a
//! Gaussian-mixture density.

use nalgebra::{DMatrix, DVector};

use crate::ansatz::ParameterState;
use crate::error::{Result, RonsError};
use crate::integrate::{integrate, IntegratorConfig, Method};
use crate::pde::FokkerPlanck;

/// Mean `X̄` and second moments `Σ_ij = E[x_i x_j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub mean: DVector<f64>,
    pub second: DMatrix<f64>,
}

impl MomentState {
    /// State with the given mean and covariance.
    pub fn from_covariance(mean: DVector<f64>, covariance: &DMatrix<f64>) -> Self {
        let second = covariance + &mean * mean.transpose();
        Self { mean, second }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `Σ − X̄X̄ᵀ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.second - &self.mean * self.mean.transpose()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.mean.as_slice().to_vec();
        out.extend_from_slice(self.second.as_slice());
        out
    }

    pub fn from_flat(dim: usize, flat: &[f64]) -> Self {
        Self {
            mean: DVector::from_column_slice(&flat[..dim]),
            second: DMatrix::from_column_slice(dim, dim, &flat[dim..dim + dim * dim]),
        }
    }
}

/// Time derivative of the moments under `dx = b(x,t) dt + √(2ν) dW`.
pub fn fp_moment_rhs(t: f64, state: &MomentState, pde: &FokkerPlanck) -> MomentState {
    let d = state.dim();
    let a = pde.forcing.at(t);
    let alpha = pde.interaction;
    let coupling = alpha / d as f64;
    let mean_sum: f64 = state.mean.sum();
    let mean = state.mean.map(|x| a - x + coupling * (mean_sum - d as f64 * x));
    let col_sums: Vec<f64> = (0..d).map(|j| state.second.column(j).sum()).collect();
    let second = DMatrix::from_fn(d, d, |i, j| {
        let diffusion = if i == j { 2.0 * pde.diffusion } else { 0.0 };
        a * (state.mean[i] + state.mean[j]) - 2.0 * (1.0 + alpha) * state.second[(i, j)]
            + coupling * (col_sums[j] + col_sums[i])
            + diffusion
    });
    MomentState { mean, second }
}

/// Integrates the moment equations from `t = 0` and samples them at `times`.
pub fn integrate_moments(
    pde: &FokkerPlanck,
    initial: &MomentState,
    times: &[f64],
    rtol: f64,
) -> Result<Vec<MomentState>> {
    let d = initial.dim();
    let horizon = *times.last().ok_or(RonsError::EmptySamples)?;
    let cfg = IntegratorConfig::with_tolerances(Method::Dopri54, rtol, rtol * 1e-3);
    let traj = integrate(
        |t, y| Ok(fp_moment_rhs(t, &MomentState::from_flat(d, y), pde).to_flat()),
        &initial.to_flat(),
        (0.0, horizon),
        times,
        &cfg,
    )?;
    Ok(traj.states.iter().map(|y| MomentState::from_flat(d, y)).collect())
}

/// Zeroth, first and second moments `∫û`, `∫x û`, `∫x xᵀ û` of a mixture.
fn moment_integrals(q: &ParameterState) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    let layout = q.layout();
    let k = layout.per_mode();
    if k < 3 {
        return Err(RonsError::layout("at least 3 parameters per mode", k));
    }
    let d = k - 2;
    let half_d = d as f64 / 2.0;
    let mut mass = 0.0;
    let mut first = DVector::zeros(d);
    let mut second = DMatrix::zeros(d, d);
    for i in 0..layout.modes() {
        let (a, w) = (q.get(i, 0), q.get(i, 1));
        if w == 0.0 {
            return Err(RonsError::SingularParameter {
                mode: i,
                reason: "width w_i must be non-zero",
            });
        }
        let m = a * a * (std::f64::consts::PI / (w * w)).powf(half_d);
        let c = DVector::from_column_slice(&q.mode(i)[2..]);
        let var = 1.0 / (2.0 * w * w);
        mass += m;
        first += &c * m;
        second += (&c * c.transpose() + DMatrix::identity(d, d) * var) * m;
    }
    Ok((mass, first, second))
}

/// Mean and covariance of the normalized density `û/I₁`.
pub fn mixture_moments(q: &ParameterState) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (mass, first, second) = moment_integrals(q)?;
    if !(mass > 0.0) {
        return Err(RonsError::ZeroMass);
    }
    let mean = first / mass;
    let cov = second / mass - &mean * mean.transpose();
    Ok((mean, cov))
}

/// Mean `∫x û` and covariance `∫x xᵀ û − mean meanᵀ` of `û` taken as a
/// density without renormalization, so lost or gained mass shows up as error.
pub fn density_moments(q: &ParameterState) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (_, mean, second) = moment_integrals(q)?;
    let cov = second - &mean * mean.transpose();
    Ok((mean, cov))
}

//! End-to-end scenarios: the eight-dimensional Fokker–Planck harmonic trap and
//! the Kuramoto–Sivashinsky equation, with their error metrics.

mod fit;
mod fokker_planck;
mod kuramoto;
mod report;

pub use fit::{fit_initial_condition, FitOptions, FitResult};
pub use fokker_planck::{fokker_planck_initial_state, run_fokker_planck};
pub use kuramoto::{
    frobenius_mc_study, frobenius_series, ks_initial_condition, run_kuramoto_sivashinsky,
    FrobeniusStudy, KsRun,
};
pub use report::{Abort, ErrorReport, Series};

use serde::{Deserialize, Serialize};

use crate::error::{Result, RonsError};
use crate::integrate::{IntegratorConfig, Method};
use crate::oracles::DnsConfig;
use crate::pde::{FokkerPlanck, Forcing};
use crate::solver::{RegularizationConfig, DEFAULT_TRUNCATION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    FokkerPlanck,
    KuramotoSivashinsky,
}

/// How the RONS system is formed and solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Closed-form kernels, dense `M q̇ = f`.
    Srons,
    /// Collocation least squares `M̃ q̇ = f̃`.
    Crons,
    /// Monte Carlo normal equations `M̄ q̇ = f̄`.
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FokkerPlanckSettings {
    pub dim: usize,
    pub interaction: f64,
    pub diffusion: f64,
    pub forcing: Forcing,
    /// Spread of the initial mode centres along the diagonal direction, in
    /// units of the initial standard deviation. Zero keeps all modes identical.
    pub center_jitter: f64,
    /// Relative tolerance of the moment-equation reference.
    pub oracle_rtol: f64,
}

impl Default for FokkerPlanckSettings {
    fn default() -> Self {
        let trap = FokkerPlanck::harmonic_trap(8);
        Self {
            dim: trap.dim,
            interaction: trap.interaction,
            diffusion: trap.diffusion,
            forcing: trap.forcing,
            center_jitter: 1e-3,
            oracle_rtol: 1e-12,
        }
    }
}

impl FokkerPlanckSettings {
    pub fn operator(&self) -> FokkerPlanck {
        FokkerPlanck {
            dim: self.dim,
            forcing: self.forcing,
            interaction: self.interaction,
            diffusion: self.diffusion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KuramotoSettings {
    pub half_width: f64,
    /// Random restarts of the initial least-squares fit.
    pub restarts: usize,
    /// Grid points of the initial fit.
    pub fit_nodes: usize,
    pub dns_modes: usize,
    pub dns_dt: f64,
    /// Draw fresh Monte Carlo samples at every right-hand-side evaluation
    /// instead of once per run.
    pub redraw_samples: bool,
}

impl Default for KuramotoSettings {
    fn default() -> Self {
        Self {
            half_width: 10.0,
            restarts: 20,
            fit_nodes: 512,
            dns_modes: 128,
            dns_dt: 1e-3,
            redraw_samples: false,
        }
    }
}

impl KuramotoSettings {
    pub fn dns(&self) -> DnsConfig {
        DnsConfig {
            modes: self.dns_modes,
            half_width: self.half_width,
            dt: self.dns_dt,
            ..DnsConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub method: SolveMethod,
    /// Number of modes `r`.
    pub modes: usize,
    /// Enforce the conserved quantities of the problem.
    #[serde(default)]
    pub constrained: bool,
    /// Tikhonov parameter `α`.
    #[serde(default)]
    pub alpha: f64,
    /// Collocation points or Monte Carlo samples `N`.
    #[serde(default)]
    pub samples: Option<usize>,
    pub horizon: f64,
    pub output_interval: f64,
    /// Errors before this time are excluded from the settled summary.
    #[serde(default)]
    pub settle_time: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub fokker_planck: FokkerPlanckSettings,
    #[serde(default)]
    pub kuramoto: KuramotoSettings,
}

impl ExperimentConfig {
    /// Eight-dimensional harmonic trap with `modes` Gaussians.
    pub fn fokker_planck(modes: usize, constrained: bool, alpha: f64) -> Self {
        Self {
            problem: Problem::FokkerPlanck,
            method: SolveMethod::Srons,
            modes,
            constrained,
            alpha,
            samples: None,
            horizon: 10.0,
            output_interval: 0.1,
            settle_time: 0.0,
            seed: 0,
            integrator: IntegratorConfig::with_tolerances(Method::Adams, 1e-8, 1e-10),
            fokker_planck: FokkerPlanckSettings::default(),
            kuramoto: KuramotoSettings::default(),
        }
    }

    /// Ten-mode tanh network on `[-10, 10)` with `N = 128`.
    pub fn kuramoto(method: SolveMethod, alpha: f64) -> Self {
        Self {
            problem: Problem::KuramotoSivashinsky,
            method,
            modes: 10,
            constrained: false,
            alpha,
            samples: Some(128),
            horizon: 30.0,
            output_interval: 0.1,
            settle_time: 0.0,
            seed: 0,
            // ode45 defaults; tighter tolerances only chase rounding noise in
            // the unregularized Monte Carlo solve
            integrator: IntegratorConfig::with_tolerances(Method::Dopri54, 1e-3, 1e-6),
            fokker_planck: FokkerPlanckSettings::default(),
            kuramoto: KuramotoSettings::default(),
        }
    }

    pub fn regularization(&self) -> Result<RegularizationConfig> {
        let mut reg = RegularizationConfig::tikhonov(self.alpha)?;
        reg.truncation = DEFAULT_TRUNCATION;
        Ok(reg)
    }

    /// Output times `0, Δ, 2Δ, …` up to the horizon.
    pub fn output_times(&self) -> Vec<f64> {
        let steps = (self.horizon / self.output_interval + 1e-9).floor() as usize;
        let mut times: Vec<f64> = (0..=steps).map(|i| i as f64 * self.output_interval).collect();
        if self.horizon - times[steps] > 1e-9 * self.horizon {
            times.push(self.horizon);
        }
        times
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(RonsError::invalid(field, format!("must be positive and finite, got {v}")))
            }
        };
        if self.modes == 0 {
            return Err(RonsError::invalid("modes", "must be positive"));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(RonsError::invalid("alpha", format!("must be finite and >= 0, got {}", self.alpha)));
        }
        if self.samples == Some(0) {
            return Err(RonsError::invalid("samples", "must be positive"));
        }
        positive("horizon", self.horizon)?;
        positive("output_interval", self.output_interval)?;
        if self.output_interval > self.horizon {
            return Err(RonsError::invalid("output_interval", "exceeds the horizon"));
        }
        if !(self.settle_time >= 0.0) || self.settle_time > self.horizon {
            return Err(RonsError::invalid("settle_time", "must lie in [0, horizon]"));
        }
        self.integrator.validate()?;
        match self.problem {
            Problem::FokkerPlanck => {
                if self.method != SolveMethod::Srons {
                    return Err(RonsError::invalid(
                        "method",
                        "the Fokker–Planck problem is solved with `srons` only",
                    ));
                }
                let fp = &self.fokker_planck;
                if fp.dim == 0 {
                    return Err(RonsError::invalid("fokker_planck.dim", "must be positive"));
                }
                positive("fokker_planck.diffusion", fp.diffusion)?;
                positive("fokker_planck.oracle_rtol", fp.oracle_rtol)?;
                if !fp.interaction.is_finite() {
                    return Err(RonsError::invalid("fokker_planck.interaction", "must be finite"));
                }
                if !(fp.center_jitter >= 0.0) || !fp.center_jitter.is_finite() {
                    return Err(RonsError::invalid("fokker_planck.center_jitter", "must be finite and >= 0"));
                }
            }
            Problem::KuramotoSivashinsky => {
                if self.method == SolveMethod::Srons {
                    return Err(RonsError::invalid(
                        "method",
                        "closed-form kernels exist for Gaussian mixtures only; use `crons` or `monte_carlo`",
                    ));
                }
                if self.constrained {
                    return Err(RonsError::invalid("constrained", "no conserved quantity is enforced for this problem"));
                }
                let ks = &self.kuramoto;
                positive("kuramoto.half_width", ks.half_width)?;
                positive("kuramoto.dns_dt", ks.dns_dt)?;
                if ks.fit_nodes < 16 {
                    return Err(RonsError::invalid("kuramoto.fit_nodes", "must be at least 16"));
                }
                let per_output = self.output_interval / ks.dns_dt;
                if (per_output - per_output.round()).abs() > 1e-9 * per_output {
                    return Err(RonsError::invalid(
                        "kuramoto.dns_dt",
                        "must divide output_interval",
                    ));
                }
                self.kuramoto.dns().validate()?;
            }
        }
        Ok(())
    }
}

/// Build identifier recorded in every report.
pub fn build_id() -> String {
    let version = env!("CARGO_PKG_VERSION");
    match option_env!("RONS_BUILD_COMMIT") {
        Some(commit) if !commit.is_empty() => format!("{version}+{commit}"),
        _ => version.to_string(),
    }
}

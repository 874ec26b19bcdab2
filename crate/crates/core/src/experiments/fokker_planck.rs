use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::report::{max_from, time_average, Abort, ErrorReport, Series};
use super::{build_id, ExperimentConfig, Problem};
use crate::ansatz::ParameterState;
use crate::error::{Result, RonsError};
use crate::integrate::integrate_partial;
use crate::oracles::{density_moments, integrate_moments, MomentState};
use crate::solver::{condition_diagnostics, solve_regularized_rons};
use crate::srons::{conserved_probability, KernelTable};

/// Initial variance of every coordinate.
const INITIAL_VARIANCE: f64 = 0.1;

/// Initial mean `μ_k = 0.9 + 2.1 k/(d−1)`.
fn initial_mean(dim: usize) -> Vec<f64> {
    if dim == 1 {
        return vec![0.9];
    }
    (0..dim).map(|k| 0.9 + 2.1 * k as f64 / (dim - 1) as f64).collect()
}

/// `r` equal Gaussians splitting the initial density: `A_i² = (2π·0.1)^{-d/2}/r`,
/// `w_i² = 5`, `c_i = μ`. A non-zero `jitter` shifts the centres symmetrically
/// along the diagonal by up to `jitter` initial standard deviations.
pub fn fokker_planck_initial_state(dim: usize, modes: usize, jitter: f64) -> Result<ParameterState> {
    if dim == 0 || modes == 0 {
        return Err(RonsError::invalid("modes", "dimension and mode count must be positive"));
    }
    let amp = ((2.0 * std::f64::consts::PI * INITIAL_VARIANCE).powf(-(dim as f64) / 2.0) / modes as f64).sqrt();
    let width = (1.0 / (2.0 * INITIAL_VARIANCE)).sqrt();
    let mu = initial_mean(dim);
    let step = jitter * INITIAL_VARIANCE.sqrt() / (dim as f64).sqrt();
    let blocks: Vec<Vec<f64>> = (0..modes)
        .map(|i| {
            let offset = if modes > 1 {
                step * (2.0 * i as f64 / (modes - 1) as f64 - 1.0)
            } else {
                0.0
            };
            let mut block = vec![amp, width];
            block.extend(mu.iter().map(|m| m + offset));
            block
        })
        .collect();
    ParameterState::from_modes(0.0, &blocks)
}

pub fn run_fokker_planck(cfg: &ExperimentConfig) -> Result<ErrorReport> {
    cfg.validate()?;
    if cfg.problem != Problem::FokkerPlanck {
        return Err(RonsError::invalid("problem", "expected fokker_planck"));
    }
    let started = Instant::now();
    let settings = &cfg.fokker_planck;
    let pde = settings.operator();
    let dim = settings.dim;
    let reg = cfg.regularization()?;
    let q0 = fokker_planck_initial_state(dim, cfg.modes, settings.center_jitter)?;
    let layout = q0.layout();
    let table = KernelTable::gaussian(dim);
    let times = cfg.output_times();

    let rhs = |t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let q = ParameterState::new(t, layout, y.to_vec())?;
        let sys = table.assemble(&pde, &q, t)?;
        let grads = if cfg.constrained {
            vec![conserved_probability(&q)?.1]
        } else {
            Vec::new()
        };
        let (qdot, _) = solve_regularized_rons(&sys.m, &sys.f, &grads, &reg)?;
        Ok(qdot.as_slice().to_vec())
    };
    let (traj, abort) = integrate_partial(rhs, q0.values(), (0.0, cfg.horizon), &times, &cfg.integrator)?;

    let initial = MomentState::from_covariance(
        DVector::from_vec(initial_mean(dim)),
        &(DMatrix::identity(dim, dim) * INITIAL_VARIANCE),
    );
    let reference = integrate_moments(&pde, &initial, &times, settings.oracle_rtol)?;
    let mass0 = conserved_probability(&q0)?.0;

    let n = traj.times.len();
    let mut mean_err = Vec::with_capacity(n);
    let mut cov_err = Vec::with_capacity(n);
    let mut mass = Vec::with_capacity(n);
    let mut drift = Vec::with_capacity(n);
    let mut cond = Vec::with_capacity(n);
    for (t, y) in traj.times.iter().zip(&traj.states) {
        let q = ParameterState::new(*t, layout, y.clone())?;
        let k = times.iter().position(|s| s == t).expect("sample times come from the request");
        let exact = &reference[k];
        let (mean, cov) = density_moments(&q)?;
        mean_err.push((&mean - &exact.mean).norm() / exact.mean.norm());
        let exact_cov = exact.covariance();
        cov_err.push((&cov - &exact_cov).norm() / exact_cov.norm());
        let i1 = conserved_probability(&q)?.0;
        mass.push(i1);
        drift.push((i1 - mass0).abs());
        cond.push(condition_diagnostics(&table.assemble_metric(&q)?)?.0);
    }

    let mut summary = BTreeMap::new();
    if n > 0 {
        summary.insert("terminal_time".into(), traj.times[n - 1]);
        summary.insert("terminal_mean_error".into(), mean_err[n - 1]);
        summary.insert("terminal_covariance_error".into(), cov_err[n - 1]);
        summary.insert("settled_max_mean_error".into(), max_from(&traj.times, &mean_err, cfg.settle_time));
        summary.insert("settled_max_covariance_error".into(), max_from(&traj.times, &cov_err, cfg.settle_time));
        summary.insert("average_mean_error".into(), time_average(&traj.times, &mean_err, 0.0));
        summary.insert("average_covariance_error".into(), time_average(&traj.times, &cov_err, 0.0));
        summary.insert("max_conservation_drift".into(), drift.iter().cloned().fold(0.0, f64::max));
        summary.insert(
            "max_constraint_violation".into(),
            mass.iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max),
        );
    }

    Ok(ErrorReport {
        problem: cfg.problem,
        method: cfg.method,
        modes: cfg.modes,
        constrained: cfg.constrained,
        alpha: cfg.alpha,
        seed: cfg.seed,
        rtol: cfg.integrator.rtol,
        atol: cfg.integrator.atol,
        build_id: build_id(),
        times: traj.times.clone(),
        series: vec![
            Series { name: "mean_error".into(), values: mean_err },
            Series { name: "covariance_error".into(), values: cov_err },
            Series { name: "probability".into(), values: mass },
            Series { name: "conservation_drift".into(), values: drift },
            Series { name: "metric_condition".into(), values: cond },
        ],
        summary,
        accepted_steps: traj.accepted,
        rejected_steps: traj.rejected,
        rhs_evals: traj.rhs_evals,
        abort: abort.map(|e| Abort { kind: e.kind().into(), message: e.to_string() }),
        wall_time_seconds: started.elapsed().as_secs_f64(),
    })
}

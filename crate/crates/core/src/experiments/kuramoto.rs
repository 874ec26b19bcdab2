use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::fit::{fit_initial_condition, FitOptions, FitResult};
use super::report::{max_from, time_average, Abort, ErrorReport, Series};
use super::{build_id, ExperimentConfig, Problem, SolveMethod};
use crate::ansatz::{Ansatz, ParameterState, TanhNetwork};
use crate::crons::{assemble_collocation, equidistant_points, uniform_samples, MonteCarloSystem};
use crate::error::{Result, RonsError};
use crate::integrate::{integrate_partial, Trajectory};
use crate::oracles::{trapezoid_metric, KsDns};
use crate::pde::KuramotoSivashinsky;
use crate::solver::{
    condition_diagnostics, solve_normal_equations, solve_regularized_least_squares, solve_regularized_rons,
    RegularizationMode,
};

/// Relative field error above which a run counts as diverged.
const DIVERGENCE_LEVEL: f64 = 0.5;

/// `u₀(x) = −sin(πx/ℓ)`.
pub fn ks_initial_condition(x: f64, half_width: f64) -> f64 {
    -(std::f64::consts::PI * x / half_width).sin()
}

/// A Kuramoto–Sivashinsky run: the error report, the sampled parameter
/// trajectory and the initial fit.
#[derive(Debug, Clone)]
pub struct KsRun {
    pub report: ErrorReport,
    pub trajectory: Trajectory,
    pub fit: FitResult,
    pub family: TanhNetwork,
}

pub fn run_kuramoto_sivashinsky(cfg: &ExperimentConfig) -> Result<KsRun> {
    cfg.validate()?;
    if cfg.problem != Problem::KuramotoSivashinsky {
        return Err(RonsError::invalid("problem", "expected kuramoto_sivashinsky"));
    }
    let started = Instant::now();
    let settings = &cfg.kuramoto;
    let half_width = settings.half_width;
    let family = TanhNetwork::new(half_width)?;
    let samples = cfg.samples.unwrap_or(128);
    let reg = cfg.regularization()?;
    let times = cfg.output_times();

    let fit_grid = equidistant_points(half_width, settings.fit_nodes);
    let u0: Vec<f64> = fit_grid.iter().map(|x| ks_initial_condition(*x, half_width)).collect();
    let fit_opts = FitOptions {
        restarts: settings.restarts,
        seed: cfg.seed,
        ..FitOptions::default()
    };
    let fit = fit_initial_condition(&family, cfg.modes, &fit_grid, &u0, &fit_opts)?;
    let layout = fit.state.layout();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let points = match cfg.method {
        SolveMethod::Crons => equidistant_points(half_width, samples),
        _ => uniform_samples(&mut rng, half_width, samples),
    };
    let domain_size = 2.0 * half_width;
    let mut fresh = points.clone();
    let rhs = |t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let q = ParameterState::new(t, layout, y.to_vec())?;
        let qdot = match cfg.method {
            SolveMethod::Crons => {
                let sys = assemble_collocation(&family, &KuramotoSivashinsky, &q, &points)?;
                solve_regularized_least_squares(&sys.matrix, &sys.rhs, &[], &reg)?.0
            }
            SolveMethod::MonteCarlo => {
                if settings.redraw_samples {
                    fresh = uniform_samples(&mut rng, half_width, samples);
                }
                let sys = assemble_collocation(&family, &KuramotoSivashinsky, &q, &fresh)?;
                let mc = MonteCarloSystem::from_collocation(&sys, domain_size)?;
                if reg.mode == RegularizationMode::None {
                    solve_normal_equations(&mc.m_bar, &mc.f_bar, reg.truncation)?
                } else {
                    solve_regularized_rons(&mc.m_bar, &mc.f_bar, &[], &reg)?.0
                }
            }
            SolveMethod::Srons => unreachable!("rejected by validation"),
        };
        Ok(qdot.as_slice().to_vec())
    };
    let (traj, abort) = integrate_partial(rhs, fit.state.values(), (0.0, cfg.horizon), &times, &cfg.integrator)?;

    let dns = KsDns::new(settings.dns())?;
    let grid = dns.grid();
    let dns_u0: Vec<f64> = grid.iter().map(|x| ks_initial_condition(*x, half_width)).collect();
    let snapshots = dns.run(&dns_u0, &traj.times)?;

    let mut field_err = Vec::with_capacity(traj.times.len());
    let mut cond = Vec::with_capacity(traj.times.len());
    for ((t, y), u) in traj.times.iter().zip(&traj.states).zip(&snapshots) {
        let approx: Vec<f64> = grid.iter().map(|x| family.value(&[*x], y)).collect();
        let diff: f64 = approx.iter().zip(u).map(|(a, b)| (a - b).powi(2)).sum();
        let norm: f64 = u.iter().map(|b| b * b).sum();
        field_err.push((diff / norm).sqrt());
        let q = ParameterState::new(*t, layout, y.clone())?;
        let sys = assemble_collocation(&family, &KuramotoSivashinsky, &q, &points)?;
        let matrix = match cfg.method {
            SolveMethod::MonteCarlo => MonteCarloSystem::from_collocation(&sys, domain_size)?.m_bar,
            _ => sys.matrix,
        };
        cond.push(condition_diagnostics(&matrix)?.0);
    }

    let mut summary = BTreeMap::new();
    summary.insert("fit_residual".into(), fit.residual);
    if let Some(last) = field_err.last() {
        summary.insert("terminal_time".into(), *traj.times.last().unwrap());
        summary.insert("terminal_field_error".into(), *last);
        summary.insert("average_field_error".into(), time_average(&traj.times, &field_err, 0.0));
        summary.insert("max_field_error".into(), max_from(&traj.times, &field_err, 0.0));
        summary.insert("settled_average_field_error".into(), time_average(&traj.times, &field_err, cfg.settle_time));
        if let Some(i) = field_err.iter().position(|e| *e > DIVERGENCE_LEVEL) {
            summary.insert("divergence_time".into(), traj.times[i]);
        }
    }

    let report = ErrorReport {
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
            Series { name: "field_error".into(), values: field_err },
            Series { name: "system_condition".into(), values: cond },
        ],
        summary,
        accepted_steps: traj.accepted,
        rejected_steps: traj.rejected,
        rhs_evals: traj.rhs_evals,
        abort: abort.map(|e| Abort { kind: e.kind().into(), message: e.to_string() }),
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(KsRun {
        report,
        trajectory: traj,
        fit,
        family,
    })
}

/// `‖M̄_N − M_ref‖_F` along a trajectory for several Monte Carlo sample sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct FrobeniusStudy {
    pub times: Vec<f64>,
    pub sample_counts: Vec<usize>,
    /// `errors[k][i]`: sample count `k`, time `i`.
    pub errors: Vec<Vec<f64>>,
    /// Largest `‖M_ref − M_2ref‖_F / ‖M_2ref‖_F` between the reference rule and
    /// one with twice the nodes.
    pub reference_self_difference: f64,
}

impl FrobeniusStudy {
    pub fn to_report_series(&self) -> Vec<Series> {
        self.sample_counts
            .iter()
            .zip(&self.errors)
            .map(|(n, e)| Series {
                name: format!("frobenius_error_n{n}"),
                values: e.clone(),
            })
            .collect()
    }
}

/// Frobenius error of the Monte Carlo metric against a trapezoid reference
/// with `reference_nodes` nodes. Samples for each count are drawn once from
/// `seed` and reused along the trajectory.
pub fn frobenius_series(
    family: &TanhNetwork,
    times: &[f64],
    states: &[Vec<f64>],
    sample_counts: &[usize],
    reference_nodes: usize,
    seed: u64,
) -> Result<FrobeniusStudy> {
    if times.len() != states.len() {
        return Err(RonsError::Dimension {
            expected: times.len(),
            got: states.len(),
        });
    }
    if sample_counts.contains(&0) || reference_nodes == 0 {
        return Err(RonsError::EmptySamples);
    }
    let half_width = family.half_width();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample_sets: Vec<Vec<f64>> = sample_counts
        .iter()
        .map(|n| uniform_samples(&mut rng, half_width, *n))
        .collect();
    let mut errors = vec![Vec::with_capacity(times.len()); sample_counts.len()];
    let mut self_diff: f64 = 0.0;
    for (i, y) in states.iter().enumerate() {
        family.layout_for(y)?;
        let reference = trapezoid_metric(family, y, reference_nodes)?;
        if i == 0 || i + 1 == states.len() {
            let fine = trapezoid_metric(family, y, 2 * reference_nodes)?;
            self_diff = self_diff.max((&reference - &fine).norm() / fine.norm());
        }
        for (k, samples) in sample_sets.iter().enumerate() {
            let m_bar = monte_carlo_metric(family, y, samples, 2.0 * half_width);
            errors[k].push((m_bar - &reference).norm());
        }
    }
    Ok(FrobeniusStudy {
        times: times.to_vec(),
        sample_counts: sample_counts.to_vec(),
        errors,
        reference_self_difference: self_diff,
    })
}

fn monte_carlo_metric(family: &TanhNetwork, q: &[f64], samples: &[f64], domain_size: f64) -> DMatrix<f64> {
    let n = q.len();
    let mut jac = DMatrix::zeros(n, samples.len());
    let mut row = vec![0.0; n];
    for (i, x) in samples.iter().enumerate() {
        family.jacobian_into(&[*x], q, &mut row);
        jac.column_mut(i).copy_from_slice(&row);
    }
    &jac * jac.transpose() * (domain_size / samples.len() as f64)
}

/// Runs the configured Kuramoto–Sivashinsky trajectory, then evaluates the
/// Monte Carlo metric error for `N ∈ {128, 1024, 10⁴}` every `stride` output
/// times.
pub fn frobenius_mc_study(cfg: &ExperimentConfig, stride: usize) -> Result<(KsRun, FrobeniusStudy)> {
    if stride == 0 {
        return Err(RonsError::invalid("stride", "must be positive"));
    }
    let run = run_kuramoto_sivashinsky(cfg)?;
    let picked: Vec<usize> = (0..run.trajectory.times.len()).step_by(stride).collect();
    let times: Vec<f64> = picked.iter().map(|i| run.trajectory.times[*i]).collect();
    let states: Vec<Vec<f64>> = picked.iter().map(|i| run.trajectory.states[*i].clone()).collect();
    let study = frobenius_series(&run.family, &times, &states, &[128, 1024, 10_000], 10_000, cfg.seed)?;
    Ok((run, study))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_condition_is_periodic_sine() {
        assert_eq!(ks_initial_condition(0.0, 10.0), 0.0);
        assert!((ks_initial_condition(5.0, 10.0) + 1.0).abs() < 1e-15);
        assert!((ks_initial_condition(-10.0, 10.0) - ks_initial_condition(10.0, 10.0)).abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_metric_on_grid_matches_trapezoid() {
        let family = TanhNetwork::new(10.0).unwrap();
        let q = [0.5, 1.2, 0.3, 0.1, -0.7, 0.8, -1.0, 0.0];
        let grid = equidistant_points(10.0, 400);
        let mc = monte_carlo_metric(&family, &q, &grid, 20.0);
        let tr = trapezoid_metric(&family, &q, 400).unwrap();
        assert!((mc - &tr).norm() < 1e-12 * tr.norm());
    }

    #[test]
    fn frobenius_error_shrinks_with_samples() {
        let family = TanhNetwork::new(10.0).unwrap();
        let q = vec![0.5, 1.2, 0.3, 0.1, -0.7, 0.8, -1.0, 0.0];
        let study = frobenius_series(&family, &[0.0], &[q], &[128, 10_000], 4000, 3).unwrap();
        assert!(study.errors[1][0] < 0.3 * study.errors[0][0]);
        assert!(study.reference_self_difference < 1e-12);
    }

    #[test]
    fn short_crons_run_tracks_dns() {
        let mut cfg = ExperimentConfig::kuramoto(SolveMethod::Crons, 1e-5);
        cfg.horizon = 1.0;
        cfg.kuramoto.restarts = 2;
        let run = run_kuramoto_sivashinsky(&cfg).unwrap();
        assert!(run.report.completed());
        assert_eq!(run.report.times.len(), 11);
        let err = run.report.series("field_error").unwrap();
        assert!(err[0] < 1e-5, "{}", err[0]);
        assert!(err[10] < 1e-2, "{}", err[10]);
    }
}

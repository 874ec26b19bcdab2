//! Self-check suites: closed-form kernels against quadrature, the solver
//! identities, and the integrators on problems with known solutions.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ansatz::ParameterState;
use crate::error::{Result, RonsError};
use crate::integrate::{integrate, IntegratorConfig, Method};
use crate::oracles::quadrature::{gaussian_metric_quadrature, pair_metric_quadrature, pair_rhs_quadrature};
use crate::pde::FokkerPlanck;
use crate::solver::{
    condition_diagnostics, pseudo_inverse, solve_constrained_rons, solve_regularized_least_squares,
    solve_regularized_rons, RegularizationConfig, DEFAULT_TRUNCATION,
};
use crate::srons::{KernelTable, MetricKernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Kernels,
    Theorems,
    Integrators,
    All,
}

impl FromStr for Suite {
    type Err = RonsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kernels" => Ok(Suite::Kernels),
            "theorems" => Ok(Suite::Theorems),
            "integrators" => Ok(Suite::Integrators),
            "all" => Ok(Suite::All),
            other => Err(RonsError::invalid(
                "suite",
                format!("unknown suite `{other}`; expected kernels, theorems, integrators or all"),
            )),
        }
    }
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    /// Worst observed value against its bound.
    pub worst: f64,
    pub bound: f64,
}

impl Check {
    fn new(suite: &'static str, name: impl Into<String>, worst: f64, bound: f64) -> Self {
        Self {
            suite,
            name: name.into(),
            passed: worst <= bound,
            worst,
            bound,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:<12} {:<44} worst {:.3e}  bound {:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.worst,
            self.bound
        )
    }
}

pub fn run_suite(suite: Suite) -> Vec<Check> {
    match suite {
        Suite::Kernels => kernel_checks(),
        Suite::Theorems => theorem_checks(),
        Suite::Integrators => integrator_checks(),
        Suite::All => {
            let mut all = kernel_checks();
            all.extend(theorem_checks());
            all.extend(integrator_checks());
            all
        }
    }
}

/// Number of random parameter draws per kernel.
pub const KERNEL_DRAWS: usize = 100;
const KERNEL_DIM: usize = 8;

fn random_mode(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let mut m = vec![rng.random_range(-1.5..1.5), rng.random_range(0.5..1.5)];
    m.extend((0..d).map(|_| rng.random_range(-1.0..1.0)));
    m
}

/// `|a − b| / max(|b|, 1e-6·scale)`: relative error, with entries that are
/// tiny against their block compared on the block scale.
fn relative(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-6 * scale)
}

/// Worst relative error of each metric kernel and each right-hand-side kernel
/// over `draws` random mode pairs in `dim` dimensions, against tensor
/// Gauss–Hermite quadrature.
pub fn kernel_errors(dim: usize, draws: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let table = KernelTable::gaussian(dim);
    let k = dim + 2;
    let pde = FokkerPlanck::harmonic_trap(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut metric_worst = vec![0.0f64; table.metric_kernels().len()];
    let mut rhs_worst = vec![0.0f64; table.rhs_kernels().len()];
    for _ in 0..draws {
        let (mi, mj) = (random_mode(&mut rng, dim), random_mode(&mut rng, dim));
        let oracle = pair_metric_quadrature(&mi, &mj, 3);
        let scale = oracle.amax();
        for row in 0..k {
            for col in 0..=row {
                let (idx, swap) = table.metric_entry(row, col);
                let v = if swap {
                    table.eval_metric_kernel(idx, &mj, &mi)
                } else {
                    table.eval_metric_kernel(idx, &mi, &mj)
                };
                metric_worst[idx] = metric_worst[idx].max(relative(v, oracle[(row, col)], scale));
            }
        }
        let t = rng.random_range(0.0..2.0);
        let q = ParameterState::from_modes(t, &[mi.clone(), mj.clone()]).expect("equal block sizes");
        let oracle = pair_rhs_quadrature(&pde, &mi, &mi, t, 3) + pair_rhs_quadrature(&pde, &mi, &mj, t, 3);
        let scale = oracle.amax();
        for (slot, worst) in rhs_worst.iter_mut().enumerate() {
            let v = table.eval_rhs_kernel(slot, &pde, &mi, &q, t);
            *worst = worst.max(relative(v, oracle[slot], scale));
        }
    }
    (metric_worst, rhs_worst)
}

fn kernel_label(kernel: &MetricKernel) -> String {
    format!("{kernel:?}").to_lowercase()
}

fn kernel_checks() -> Vec<Check> {
    const SUITE: &str = "kernels";
    let mut out = Vec::new();
    let table = KernelTable::gaussian(KERNEL_DIM);
    let k = KERNEL_DIM + 2;
    out.push(Check::new(
        SUITE,
        format!("distinct kernels = K(K+3)/2 = {}", k * (k + 3) / 2),
        (table.len() as f64 - (k * (k + 3) / 2) as f64).abs(),
        0.0,
    ));
    let (metric, rhs) = kernel_errors(KERNEL_DIM, KERNEL_DRAWS, 2024);
    for (idx, err) in metric.iter().enumerate() {
        out.push(Check::new(
            SUITE,
            format!("metric {idx:>2} {}", kernel_label(&table.metric_kernels()[idx])),
            *err,
            1e-8,
        ));
    }
    for (slot, err) in rhs.iter().enumerate() {
        out.push(Check::new(SUITE, format!("rhs {slot:>2}"), *err, 1e-8));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let modes: Vec<Vec<f64>> = (0..3).map(|_| random_mode(&mut rng, 2)).collect();
        let q = ParameterState::from_modes(0.0, &modes).expect("equal block sizes");
        let m = KernelTable::gaussian(2).assemble_metric(&q).expect("valid state");
        let oracle = gaussian_metric_quadrature(&q, 8).expect("valid state");
        worst = worst.max((&m - &oracle).norm() / oracle.norm());
    }
    out.push(Check::new(SUITE, "assembled metric r=3 d=2 (Frobenius)", worst, 1e-8));
    out
}

fn orthonormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
    a.qr().q()
}

/// `p×n` matrix with singular values log-spaced from 1 down to `1/κ`.
pub fn matrix_with_condition(rng: &mut ChaCha8Rng, p: usize, n: usize, kappa: f64) -> DMatrix<f64> {
    let u = orthonormal(rng, p, n);
    let v = orthonormal(rng, n, n);
    let s = DVector::from_fn(n, |i, _| {
        let frac = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
        kappa.powf(-frac)
    });
    u * DMatrix::from_diagonal(&s) * v.transpose()
}

/// One random full-column-rank instance of `M̄q̇ = f̄` vs `M̃⁺f̃`. Returns the
/// relative solution difference, `κ(M̃)` and the conditioning-identity error.
pub fn normal_equation_instance(rng: &mut ChaCha8Rng) -> Result<(f64, f64, f64)> {
    let n = rng.random_range(3..15);
    let p = n + rng.random_range(1..40);
    let kappa = 10f64.powf(rng.random_range(0.0..4.0));
    let mt = matrix_with_condition(rng, p, n, kappa);
    let ft = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
    let domain = rng.random_range(0.5..20.0);
    let scale = domain / p as f64;
    let m_bar = mt.tr_mul(&mt) * scale;
    let f_bar = mt.tr_mul(&ft) * scale;
    let (mc, _) = solve_constrained_rons(&m_bar, &f_bar, &[], DEFAULT_TRUNCATION)?;
    let (ls, _) = solve_regularized_least_squares(&mt, &ft, &[], &RegularizationConfig::none())?;
    let (k_mt, _, _) = condition_diagnostics(&mt)?;
    let (k_normal, _, _) = condition_diagnostics(&mt.tr_mul(&mt))?;
    Ok(((&mc - &ls).norm() / ls.norm(), k_mt, (k_normal - k_mt * k_mt).abs() / (k_mt * k_mt)))
}

/// Instance of the regularized constrained problem. `rank < n` makes `M`
/// singular. Returns the relative stationarity residual and the relative
/// constraint inner product, for the dense and the collocation solver.
pub fn stationarity_instance(rng: &mut ChaCha8Rng) -> Result<[f64; 4]> {
    let n = rng.random_range(4..20);
    let rank = if rng.random_bool(0.5) { rng.random_range(1..n) } else { n };
    let p = rank.max(1) + rng.random_range(0..20);
    let mut mt = DMatrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
    if rank < n {
        // project the columns onto a rank-deficient span
        let basis = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
        let proj = &basis * pseudo_inverse(&basis, DEFAULT_TRUNCATION)?;
        mt *= proj;
    }
    let ft = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
    let m = mt.tr_mul(&mt);
    let f = mt.tr_mul(&ft);
    let count = rng.random_range(1..4).min(n - 1);
    let grads: Vec<DVector<f64>> = (0..count)
        .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    let alpha = 10f64.powf(rng.random_range(-6.0..0.0));
    let reg = RegularizationConfig::tikhonov(alpha)?;
    let shifted = &m + DMatrix::identity(n, n) * alpha;
    let measure = |qdot: &DVector<f64>, lambda: &[f64]| {
        let mut force = DVector::zeros(n);
        for (g, l) in grads.iter().zip(lambda) {
            force += g * *l;
        }
        let resid = &shifted * qdot - &f + &force;
        let scale = shifted.norm() * qdot.norm() + f.norm() + force.norm();
        let orth = grads
            .iter()
            .map(|g| g.dot(qdot).abs() / (g.norm() * qdot.norm().max(f64::MIN_POSITIVE)))
            .fold(0.0, f64::max);
        (resid.norm() / scale, orth)
    };
    let (q_dense, rep_dense) = solve_regularized_rons(&m, &f, &grads, &reg)?;
    let (q_ls, rep_ls) = solve_regularized_least_squares(&mt, &ft, &grads, &reg)?;
    let (r1, o1) = measure(&q_dense, &rep_dense.multipliers);
    let (r2, o2) = measure(&q_ls, &rep_ls.multipliers);
    Ok([r1, o1, r2, o2])
}

/// Worst deviation from the four Penrose conditions over random
/// rank-deficient matrices, relative to `‖A‖`, `‖A⁺‖`.
fn penrose_worst(rng: &mut ChaCha8Rng, count: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let (p, n) = (rng.random_range(2..20), rng.random_range(2..20));
        let rank = rng.random_range(1..=p.min(n));
        let a = DMatrix::from_fn(p, rank, |_, _| rng.random_range(-1.0..1.0))
            * DMatrix::from_fn(rank, n, |_, _| rng.random_range(-1.0..1.0));
        let x = pseudo_inverse(&a, DEFAULT_TRUNCATION)?;
        let (na, nx) = (a.norm(), x.norm());
        let ax = &a * &x;
        let xa = &x * &a;
        worst = worst
            .max((&ax * &a - &a).norm() / na)
            .max((&xa * &x - &x).norm() / nx)
            .max((&ax - ax.transpose()).norm() / ax.norm())
            .max((&xa - xa.transpose()).norm() / xa.norm());
    }
    Ok(worst)
}

/// Instances per theorem check.
pub const THEOREM_INSTANCES: usize = 50;

fn theorem_checks() -> Vec<Check> {
    const SUITE: &str = "theorems";
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut eq_worst: f64 = 0.0;
    let mut cond_worst: f64 = 0.0;
    for _ in 0..THEOREM_INSTANCES {
        match normal_equation_instance(&mut rng) {
            Ok((diff, kappa, cond)) => {
                eq_worst = eq_worst.max(diff / (1e-8 * kappa));
                cond_worst = cond_worst.max(cond);
            }
            Err(_) => eq_worst = f64::INFINITY,
        }
    }
    out.push(Check::new(SUITE, "monte carlo = collocation (err / 1e-8 kappa)", eq_worst, 1.0));
    out.push(Check::new(SUITE, "kappa(MtM) = kappa(M)^2", cond_worst, 1e-6));
    let mut worst = [0.0f64; 4];
    for _ in 0..THEOREM_INSTANCES {
        match stationarity_instance(&mut rng) {
            Ok(v) => {
                for (w, x) in worst.iter_mut().zip(v) {
                    *w = w.max(x);
                }
            }
            Err(_) => worst = [f64::INFINITY; 4],
        }
    }
    out.push(Check::new(SUITE, "stationarity, dense regularized", worst[0], 1e-9));
    out.push(Check::new(SUITE, "constraint orthogonality, dense", worst[1], 1e-9));
    out.push(Check::new(SUITE, "stationarity, collocation regularized", worst[2], 1e-9));
    out.push(Check::new(SUITE, "constraint orthogonality, collocation", worst[3], 1e-9));
    let penrose = penrose_worst(&mut rng, 50).unwrap_or(f64::INFINITY);
    out.push(Check::new(SUITE, "penrose conditions", penrose, 1e-10));
    out
}

fn integrator_checks() -> Vec<Check> {
    const SUITE: &str = "integrators";
    let mut out = Vec::new();
    for method in [Method::Dopri54, Method::Adams] {
        let name = match method {
            Method::Dopri54 => "dopri54",
            Method::Adams => "adams",
        };
        let rtol = 1e-8;
        let cfg = IntegratorConfig::with_tolerances(method, rtol, 1e-12);
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        // y' = -y + sin t, y(0) = 1
        let exact = |t: f64| 1.5 * (-t).exp() + 0.5 * (t.sin() - t.cos());
        let err = integrate(|t, y| Ok(vec![-y[0] + t.sin()]), &[1.0], (0.0, 10.0), &times, &cfg)
            .map(|traj| {
                traj.times
                    .iter()
                    .zip(&traj.states)
                    .map(|(t, y)| (y[0] - exact(*t)).abs() / exact(*t).abs().max(1e-3))
                    .fold(0.0, f64::max)
            })
            .unwrap_or(f64::INFINITY);
        out.push(Check::new(SUITE, format!("{name} forced decay"), err, 100.0 * rtol));
        // harmonic oscillator over ten periods
        let tau = 2.0 * std::f64::consts::PI;
        let err = integrate(|_, y| Ok(vec![y[1], -y[0]]), &[1.0, 0.0], (0.0, 10.0 * tau), &[], &cfg)
            .map(|traj| {
                let y = traj.last().expect("two samples");
                ((y[0] - 1.0).powi(2) + y[1].powi(2)).sqrt()
            })
            .unwrap_or(f64::INFINITY);
        out.push(Check::new(SUITE, format!("{name} oscillator, ten periods"), err, 1000.0 * rtol));
        let run = || integrate(|t, y| Ok(vec![y[1], -y[0] * (1.0 + 0.1 * t.cos())]), &[0.3, 1.0], (0.0, 5.0), &[], &cfg);
        let same = match (run(), run()) {
            (Ok(a), Ok(b)) if a == b => 0.0,
            _ => 1.0,
        };
        out.push(Check::new(SUITE, format!("{name} bit-identical reruns"), same, 0.0));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        assert_eq!("kernels".parse::<Suite>().unwrap(), Suite::Kernels);
        assert_eq!("all".parse::<Suite>().unwrap(), Suite::All);
        assert_eq!("bogus".parse::<Suite>().unwrap_err().kind(), "invalid_config");
    }

    #[test]
    fn conditioned_matrix_has_requested_kappa() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = matrix_with_condition(&mut rng, 30, 6, 1e3);
        let (kappa, smax, _) = condition_diagnostics(&a).unwrap();
        assert!((kappa / 1e3 - 1.0).abs() < 1e-10);
        assert!((smax - 1.0).abs() < 1e-12);
    }

    #[test]
    fn low_dimensional_kernels_agree() {
        let (metric, rhs) = kernel_errors(2, 10, 5);
        // K = 4: ten metric kernels, four right-hand-side kernels
        assert_eq!((metric.len(), rhs.len()), (10, 4));
        assert!(metric.iter().chain(&rhs).all(|e| *e < 1e-8));
    }

    #[test]
    fn theorem_and_integrator_suites_pass() {
        for c in run_suite(Suite::Theorems).into_iter().chain(run_suite(Suite::Integrators)) {
            assert!(c.passed, "{c}");
        }
    }
}

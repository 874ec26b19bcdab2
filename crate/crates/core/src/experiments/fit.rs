use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ansatz::{Ansatz, Domain, Layout, ParameterState, TanhNetwork, TANH_SLOTS};
use crate::error::{Result, RonsError};
use crate::solver::{pinv_solve, thin_svd, ThinSvd};

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Random starts in addition to the deterministic one.
    pub restarts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Stop early once a start reaches this residual.
    pub target: f64,
    /// Best residual above this is a fit failure.
    pub failure_threshold: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            seed: 0,
            max_iterations: 2000,
            target: 1e-9,
            failure_threshold: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub state: ParameterState,
    /// `‖û(·, q) − u₀‖_{L²}` by the periodic trapezoid rule.
    pub residual: f64,
    /// Index of the winning start (0 is the deterministic one).
    pub best_start: usize,
    pub starts_tried: usize,
}

/// Least-squares fit `q = argmin ‖û(·, q) − u₀‖²` of an `r`-unit tanh network
/// to samples `u0` on the equidistant periodic `grid`.
pub fn fit_initial_condition(
    family: &TanhNetwork,
    modes: usize,
    grid: &[f64],
    u0: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    if modes == 0 {
        return Err(RonsError::invalid("modes", "must be positive"));
    }
    if grid.len() != u0.len() {
        return Err(RonsError::Dimension {
            expected: grid.len(),
            got: u0.len(),
        });
    }
    if grid.is_empty() {
        return Err(RonsError::EmptySamples);
    }
    if u0.iter().chain(grid).any(|v| !v.is_finite()) {
        return Err(RonsError::NonFinite("fit data"));
    }
    let Domain::Periodic { half_width } = family.domain() else {
        unreachable!("tanh networks are periodic")
    };
    let problem = LeastSquares {
        family,
        grid,
        target: DVector::from_column_slice(u0),
        weight: (2.0 * half_width / grid.len() as f64).sqrt(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(Vec<f64>, f64, usize)> = None;
    let mut tried = 0;
    for start in 0..=opts.restarts {
        let shape = if start == 0 {
            odd_start(modes)
        } else {
            random_start(&mut rng, modes)
        };
        let q0 = problem.with_linear_amplitudes(shape);
        let (q, residual) = problem.levenberg_marquardt(q0, opts.max_iterations);
        tried += 1;
        if best.as_ref().is_none_or(|b| residual < b.1) {
            best = Some((q, residual, start));
        }
        if residual <= opts.target {
            break;
        }
    }
    let (q, residual, best_start) = best.expect("at least one start");
    if !(residual <= opts.failure_threshold) {
        return Err(RonsError::FitFailure {
            residual,
            restarts: opts.restarts,
        });
    }
    Ok(FitResult {
        state: ParameterState::new(0.0, Layout::new(modes, TANH_SLOTS), q)?,
        residual,
        best_start,
        starts_tried: tried,
    })
}

/// Unit weights spread over `[0.2, 3]`, zero biases.
fn odd_start(modes: usize) -> Vec<f64> {
    (0..modes)
        .flat_map(|i| {
            let w = if modes > 1 { 0.2 + 2.8 * i as f64 / (modes - 1) as f64 } else { 1.0 };
            [0.0, w, 0.0, 0.0]
        })
        .collect()
}

fn random_start(rng: &mut ChaCha8Rng, modes: usize) -> Vec<f64> {
    (0..modes)
        .flat_map(|_| {
            let w: f64 = rng.random_range(0.2..3.0);
            let c = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let d = rng.random_range(-0.5..0.5);
            [0.0, w, c, d]
        })
        .collect()
}

struct LeastSquares<'a> {
    family: &'a TanhNetwork,
    grid: &'a [f64],
    target: DVector<f64>,
    /// `√h`, so that `‖r‖₂` is the trapezoid `L²` norm.
    weight: f64,
}

impl LeastSquares<'_> {
    fn residual(&self, q: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.grid.len(),
            self.grid
                .iter()
                .zip(self.target.iter())
                .map(|(x, u)| self.weight * (self.family.value(&[*x], q) - u)),
        )
    }

    fn jacobian(&self, q: &[f64]) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.grid.len(), q.len());
        let mut row = vec![0.0; q.len()];
        for (i, x) in self.grid.iter().enumerate() {
            self.family.jacobian_into(&[*x], q, &mut row);
            for (j, v) in row.iter().enumerate() {
                jac[(i, j)] = self.weight * v;
            }
        }
        jac
    }

    /// Sets the amplitudes to the linear least-squares optimum for the given
    /// shape parameters.
    fn with_linear_amplitudes(&self, mut q: Vec<f64>) -> Vec<f64> {
        let modes = q.len() / TANH_SLOTS;
        let mut basis = DMatrix::zeros(self.grid.len(), modes);
        for (i, x) in self.grid.iter().enumerate() {
            for (k, m) in q.chunks_exact(TANH_SLOTS).enumerate() {
                let theta = self.family.wavenumber() * x + m[2];
                basis[(i, k)] = (m[1] * theta.sin() + m[3]).tanh();
            }
        }
        let amps = pinv_solve(&basis, &self.target, 1e-12).expect("finite basis");
        for (k, a) in amps.iter().enumerate() {
            q[k * TANH_SLOTS] = *a;
        }
        q
    }

    /// Levenberg's method with the damped step taken from the SVD of the
    /// Jacobian. Returns the final parameters and `L²` residual.
    fn levenberg_marquardt(&self, mut q: Vec<f64>, max_iterations: usize) -> (Vec<f64>, f64) {
        let mut r = self.residual(&q);
        let mut cost = r.norm_squared();
        let mut lambda = -1.0;
        for _ in 0..max_iterations {
            if cost == 0.0 {
                break;
            }
            let ThinSvd { u, s, v_t } = match thin_svd(&self.jacobian(&q)) {
                Ok(svd) => svd,
                Err(_) => break,
            };
            let g = u.tr_mul(&r);
            if lambda < 0.0 {
                lambda = 1e-3 * s.max().powi(2);
            }
            let mut improved = false;
            for _ in 0..30 {
                let filtered = DVector::from_iterator(s.len(), s.iter().zip(g.iter()).map(|(si, gi)| si * gi / (si * si + lambda)));
                let step = v_t.tr_mul(&filtered);
                let trial: Vec<f64> = q.iter().zip(step.iter()).map(|(a, b)| a - b).collect();
                let r_trial = self.residual(&trial);
                let c_trial = r_trial.norm_squared();
                if c_trial.is_finite() && c_trial < cost {
                    let gain = (cost - c_trial) / cost;
                    q = trial;
                    r = r_trial;
                    cost = c_trial;
                    lambda = (lambda / 3.0).max(1e-300);
                    improved = gain > 1e-15;
                    break;
                }
                lambda *= 4.0;
            }
            if !improved {
                break;
            }
        }
        (q, cost.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crons::equidistant_points;

    fn grid_values(family: &TanhNetwork, f: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
        let grid = equidistant_points(family.half_width(), 256);
        let u0 = grid.iter().map(|x| f(*x)).collect();
        (grid, u0)
    }

    #[test]
    fn single_unit_is_recovered() {
        let family = TanhNetwork::new(10.0).unwrap();
        let truth = [0.8, 1.3, 0.4, -0.2];
        let (grid, u0) = grid_values(&family, |x| family.value(&[x], &truth));
        let fit = fit_initial_condition(&family, 1, &grid, &u0, &FitOptions::default()).unwrap();
        assert!(fit.residual < 1e-10, "{}", fit.residual);
    }

    #[test]
    fn zero_data_gives_zero_amplitudes() {
        let family = TanhNetwork::new(10.0).unwrap();
        let (grid, u0) = grid_values(&family, |_| 0.0);
        let fit = fit_initial_condition(&family, 3, &grid, &u0, &FitOptions::default()).unwrap();
        assert_eq!(fit.residual, 0.0);
        for i in 0..3 {
            assert_eq!(fit.state.get(i, 0), 0.0);
        }
    }

    #[test]
    fn unreachable_data_is_a_fit_failure() {
        let family = TanhNetwork::new(10.0).unwrap();
        // high wavenumber square-ish wave, one unit cannot follow it
        let (grid, u0) = grid_values(&family, |x| (3.0 * x).sin().signum());
        let opts = FitOptions {
            restarts: 2,
            max_iterations: 50,
            ..FitOptions::default()
        };
        match fit_initial_condition(&family, 1, &grid, &u0, &opts).unwrap_err() {
            RonsError::FitFailure { residual, restarts } => {
                assert!(residual > 1e-4);
                assert_eq!(restarts, 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let family = TanhNetwork::new(10.0).unwrap();
        let (grid, u0) = grid_values(&family, |x| (std::f64::consts::PI * x / 10.0).cos() * 0.5);
        let opts = FitOptions {
            restarts: 3,
            max_iterations: 100,
            failure_threshold: 1.0,
            ..FitOptions::default()
        };
        let a = fit_initial_condition(&family, 2, &grid, &u0, &opts).unwrap();
        let b = fit_initial_condition(&family, 2, &grid, &u0, &opts).unwrap();
        assert_eq!(a, b);
    }
}

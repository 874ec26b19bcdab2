//! Explicit adaptive integrators for `q̇ = Φ(t, q)`.
//!
//! [`Method::Dopri54`] is the Dormand–Prince 5(4) pair with a PI step-size
//! controller and continuous extension; [`Method::Adams`] is a variable-order
//! (1–12), variable-step Adams–Bashforth–Moulton PECE scheme.

mod adams;
mod dopri;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RonsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dopri54,
    Adams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    /// Starting step; chosen automatically when absent.
    pub initial_step: Option<f64>,
    /// Upper bound on the step; unbounded when absent.
    pub max_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Dopri54,
            rtol: 1e-6,
            atol: 1e-9,
            initial_step: None,
            max_step: None,
            max_steps: 500_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerances(method: Method, rtol: f64, atol: f64) -> Self {
        Self {
            method,
            rtol,
            atol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(RonsError::invalid(field, format!("must be positive and finite, got {v}")))
            }
        };
        positive("integrator.rtol", self.rtol)?;
        positive("integrator.atol", self.atol)?;
        if let Some(h) = self.initial_step {
            positive("integrator.initial_step", h)?;
        }
        if let Some(h) = self.max_step {
            positive("integrator.max_step", h)?;
        }
        if let (Some(h0), Some(hmax)) = (self.initial_step, self.max_step) {
            if h0 > hmax {
                return Err(RonsError::invalid(
                    "integrator.initial_step",
                    format!("{h0} exceeds max_step {hmax}"),
                ));
            }
        }
        if self.max_steps == 0 {
            return Err(RonsError::invalid("integrator.max_steps", "must be positive"));
        }
        Ok(())
    }

    fn max_step(&self) -> f64 {
        self.max_step.unwrap_or(f64::INFINITY)
    }
}

/// States sampled at requested times, with step statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

impl Trajectory {
    pub fn last(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }
}

/// Integrates `q̇ = rhs(t, q)` from `t_span.0` to `t_span.1`, recording the
/// state at each of `samples` (strictly increasing, inside the span). An empty
/// sample list records the two endpoints.
pub fn integrate<F>(
    rhs: F,
    q0: &[f64],
    t_span: (f64, f64),
    samples: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    match integrate_partial(rhs, q0, t_span, samples, cfg)? {
        (traj, None) => Ok(traj),
        (_, Some(err)) => Err(err),
    }
}

/// Like [`integrate`], but an abort during stepping still returns the samples
/// recorded before it, together with the error.
pub fn integrate_partial<F>(
    rhs: F,
    q0: &[f64],
    t_span: (f64, f64),
    samples: &[f64],
    cfg: &IntegratorConfig,
) -> Result<(Trajectory, Option<RonsError>)>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    let (t0, t1) = t_span;
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(RonsError::invalid("t_span", format!("need t0 < t1, got ({t0}, {t1})")));
    }
    let samples = if samples.is_empty() {
        vec![t0, t1]
    } else {
        samples.to_vec()
    };
    if samples.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(RonsError::invalid("samples", "sample times must be strictly increasing"));
    }
    if samples[0] < t0 || *samples.last().unwrap() > t1 {
        return Err(RonsError::invalid("samples", "sample times must lie inside the span"));
    }
    if q0.iter().any(|v| !v.is_finite()) {
        return Err(RonsError::NonFinite("initial state"));
    }
    let mut rhs = Counted { f: rhs, evals: 0 };
    let mut sampler = Sampler::new(&samples);
    let mut stats = Stats::default();
    let outcome = match cfg.method {
        Method::Dopri54 => dopri::run(&mut rhs, q0, t0, t1, &mut sampler, &mut stats, cfg),
        Method::Adams => adams::run(&mut rhs, q0, t0, t1, &mut sampler, &mut stats, cfg),
    };
    let traj = sampler.finish(stats.accepted, stats.rejected, rhs.evals);
    Ok((traj, outcome.err()))
}

#[derive(Debug, Default)]
struct Stats {
    accepted: usize,
    rejected: usize,
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(f64, &[f64]) -> Result<Vec<f64>>> Counted<F> {
    fn call(&mut self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        self.evals += 1;
        (self.f)(t, y)
    }
}

/// Collects dense-output samples as steps are accepted.
struct Sampler<'a> {
    samples: &'a [f64],
    next: usize,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl<'a> Sampler<'a> {
    fn new(samples: &'a [f64]) -> Self {
        Self {
            samples,
            next: 0,
            times: Vec::with_capacity(samples.len()),
            states: Vec::with_capacity(samples.len()),
        }
    }

    /// Records samples in `(t_from, t_to]` (or `[t_from, t_to]` for the first
    /// call) using `eval`; a sample equal to `t_to` takes `y_to` verbatim.
    fn record(&mut self, t_to: f64, y_to: &[f64], mut eval: impl FnMut(f64) -> Vec<f64>) {
        while self.next < self.samples.len() && self.samples[self.next] <= t_to {
            let ts = self.samples[self.next];
            let y = if ts == t_to { y_to.to_vec() } else { eval(ts) };
            self.times.push(ts);
            self.states.push(y);
            self.next += 1;
        }
    }

    fn finish(self, accepted: usize, rejected: usize, rhs_evals: usize) -> Trajectory {
        Trajectory {
            times: self.times,
            states: self.states,
            accepted,
            rejected,
            rhs_evals,
        }
    }
}

/// Weighted RMS norm of an error estimate against the mixed tolerance.
fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], rtol: f64, atol: f64) -> f64 {
    let n = err.len().max(1) as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sk = atol + rtol * a.abs().max(b.abs());
            (e / sk).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(method: Method, rtol: f64) -> f64 {
        let cfg = IntegratorConfig::with_tolerances(method, rtol, rtol * 1e-3);
        let traj = integrate(|_, y| Ok(vec![-y[0]]), &[1.0], (0.0, 1.0), &[], &cfg).unwrap();
        traj.last().unwrap()[0]
    }

    #[test]
    fn exponential_decay_is_accurate() {
        for method in [Method::Dopri54, Method::Adams] {
            let y = decay(method, 1e-9);
            assert!((y - (-1.0f64).exp()).abs() < 1e-8, "{method:?}: {y}");
        }
    }

    #[test]
    fn global_error_tracks_tolerance() {
        for method in [Method::Dopri54, Method::Adams] {
            let mut prev = f64::INFINITY;
            for p in 4..=10 {
                let rtol = 10f64.powi(-p);
                let err = (decay(method, rtol) - (-1.0f64).exp()).abs();
                assert!(err < 50.0 * rtol, "{method:?} rtol {rtol}: {err}");
                assert!(err < prev * 2.0 || err < 1e-13);
                prev = err;
            }
        }
    }

    #[test]
    fn zero_rhs_takes_one_step() {
        let cfg = IntegratorConfig::default();
        let traj = integrate(|_, y| Ok(vec![0.0; y.len()]), &[1.0, 2.0], (0.0, 5.0), &[], &cfg).unwrap();
        assert_eq!(traj.accepted, 1);
        assert_eq!(traj.states, vec![vec![1.0, 2.0], vec![1.0, 2.0]]);
        let capped = IntegratorConfig {
            max_step: Some(1.0),
            ..cfg
        };
        let traj = integrate(|_, y| Ok(vec![0.0; y.len()]), &[1.0], (0.0, 5.0), &[], &capped).unwrap();
        assert_eq!(traj.accepted, 5);
    }

    #[test]
    fn oscillator_energy_is_conserved() {
        for method in [Method::Dopri54, Method::Adams] {
            let cfg = IntegratorConfig::with_tolerances(method, 1e-10, 1e-12);
            let period = 2.0 * std::f64::consts::PI;
            let samples: Vec<f64> = (0..=100).map(|k| k as f64 * period).collect();
            let traj = integrate(
                |_, y| Ok(vec![y[1], -y[0]]),
                &[1.0, 0.0],
                (0.0, 100.0 * period),
                &samples,
                &cfg,
            )
            .unwrap();
            for y in &traj.states {
                let energy = 0.5 * (y[0] * y[0] + y[1] * y[1]);
                assert!((energy - 0.5).abs() < 1e-6, "{method:?}: {energy}");
            }
        }
    }

    #[test]
    fn dense_output_matches_reintegration() {
        for method in [Method::Dopri54, Method::Adams] {
            let rtol = 1e-8;
            let cfg = IntegratorConfig::with_tolerances(method, rtol, 1e-10);
            let f = |t: f64, y: &[f64]| Ok(vec![y[1], -y[0] + (2.0 * t).sin()]);
            let samples: Vec<f64> = (0..=37).map(|k| k as f64 * 0.27).collect();
            let traj = integrate(f, &[0.3, -0.2], (0.0, 10.0), &samples, &cfg).unwrap();
            for (ts, y) in traj.times.iter().zip(&traj.states).skip(1) {
                let direct = integrate(f, &[0.3, -0.2], (0.0, *ts), &[], &cfg).unwrap();
                let z = direct.last().unwrap();
                for (a, b) in y.iter().zip(z) {
                    assert!((a - b).abs() < 10.0 * rtol, "{method:?} t={ts}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn runs_are_bit_identical() {
        for method in [Method::Dopri54, Method::Adams] {
            let cfg = IntegratorConfig::with_tolerances(method, 1e-7, 1e-9);
            let f = |t: f64, y: &[f64]| Ok(vec![y[1], (1.0 - y[0] * y[0]) * y[1] - y[0] + t.cos()]);
            let a = integrate(f, &[2.0, 0.0], (0.0, 20.0), &[5.0, 10.0, 20.0], &cfg).unwrap();
            let b = integrate(f, &[2.0, 0.0], (0.0, 20.0), &[5.0, 10.0, 20.0], &cfg).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn stiff_blow_up_reports_underflow_or_max_steps() {
        let cfg = IntegratorConfig {
            max_steps: 10_000,
            ..IntegratorConfig::default()
        };
        let err = integrate(|_, y| Ok(vec![y[0] * y[0]]), &[1.0], (0.0, 2.0), &[], &cfg).unwrap_err();
        assert!(matches!(err.kind(), "step_underflow" | "max_steps"), "{err}");
    }

    #[test]
    fn partial_run_keeps_samples_before_abort() {
        let cfg = IntegratorConfig::default();
        let (traj, err) = integrate_partial(
            |t, y| if t > 0.55 { Err(RonsError::ZeroMatrix) } else { Ok(vec![-y[0]]) },
            &[1.0],
            (0.0, 1.0),
            &[0.0, 0.25, 0.5, 0.75, 1.0],
            &cfg,
        )
        .unwrap();
        assert_eq!(err, Some(RonsError::ZeroMatrix));
        assert!(traj.times.len() >= 2 && traj.times.len() < 5);
        assert!((traj.states[1][0] - (-0.25f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn rhs_errors_propagate() {
        let cfg = IntegratorConfig::default();
        let err = integrate(|_, _| Err(RonsError::ZeroMatrix), &[1.0], (0.0, 1.0), &[], &cfg).unwrap_err();
        assert_eq!(err, RonsError::ZeroMatrix);
    }

    #[test]
    fn config_validation() {
        let bad = IntegratorConfig {
            rtol: -1.0,
            ..IntegratorConfig::default()
        };
        assert_eq!(bad.validate().unwrap_err().kind(), "invalid_config");
        let bad = IntegratorConfig {
            initial_step: Some(1.0),
            max_step: Some(0.1),
            ..IntegratorConfig::default()
        };
        assert!(bad.validate().is_err());
        let cfg = IntegratorConfig::default();
        assert!(integrate(|_, y| Ok(y.to_vec()), &[1.0], (1.0, 1.0), &[], &cfg).is_err());
        assert!(integrate(|_, y| Ok(y.to_vec()), &[1.0], (0.0, 1.0), &[0.5, 0.2], &cfg).is_err());
    }
}

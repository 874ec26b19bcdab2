//! Variable-order, variable-step Adams–Bashforth–Moulton in PECE mode.
//!
//! The predictor of order `k` integrates the polynomial through the last `k`
//! derivative values; the corrector adds the predicted derivative at the new
//! time. Both integrals are evaluated exactly by Gauss–Legendre quadrature of
//! the Lagrange interpolant, so nonuniform step histories need no special
//! coefficient recurrences.

use std::collections::VecDeque;

use super::{all_finite, error_norm, Counted, IntegratorConfig, Sampler, Stats};
use crate::error::{Result, RonsError};

const MAX_ORDER: usize = 12;
const SAFE: f64 = 0.9;
const MAX_GROWTH: f64 = 2.0;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let (pn, pn1) = if n == 1 { (z, 1.0) } else { (p1, p0) };
            let dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                let dp_final = {
                    let (mut q0, mut q1) = (1.0, z);
                    for j in 2..=n {
                        let q2 = ((2 * j - 1) as f64 * z * q1 - (j - 1) as f64 * q0) / j as f64;
                        q0 = q1;
                        q1 = q2;
                    }
                    if n == 1 {
                        1.0
                    } else {
                        n as f64 * (z * q1 - q0) / (z * z - 1.0)
                    }
                };
                w[i] = 2.0 / ((1.0 - z * z) * dp_final * dp_final);
                break;
            }
        }
        x[i] = z;
    }
    (x, w)
}

struct Quadrature {
    x: Vec<f64>,
    w: Vec<f64>,
}

impl Quadrature {
    fn new() -> Self {
        // exact for the degree-12 corrector polynomial
        let (x, w) = gauss_legendre(7);
        Self { x, w }
    }

    /// `∫_0^θ ℓ_j(s) ds` for the Lagrange basis on `nodes`.
    fn weights(&self, nodes: &[f64], theta: f64) -> Vec<f64> {
        let mut out = vec![0.0; nodes.len()];
        for (xg, wg) in self.x.iter().zip(&self.w) {
            let s = 0.5 * theta * (1.0 + xg);
            let scale = 0.5 * theta * wg;
            for (j, sj) in nodes.iter().enumerate() {
                let mut l = 1.0;
                for (i, si) in nodes.iter().enumerate() {
                    if i != j {
                        l *= (s - si) / (sj - si);
                    }
                }
                out[j] += scale * l;
            }
        }
        out
    }
}

struct History {
    ts: VecDeque<f64>,
    fs: VecDeque<Vec<f64>>,
}

impl History {
    /// Scaled node positions `(t_i - t)/h` of the most recent `k` points.
    fn nodes(&self, k: usize, t: f64, h: f64) -> Vec<f64> {
        self.ts.iter().take(k).map(|ti| (ti - t) / h).collect()
    }

    fn push(&mut self, t: f64, f: Vec<f64>) {
        self.ts.push_front(t);
        self.fs.push_front(f);
        if self.ts.len() > MAX_ORDER + 1 {
            self.ts.pop_back();
            self.fs.pop_back();
        }
    }
}

fn combine(y: &[f64], h: f64, weights: &[f64], f_new: Option<&[f64]>, hist: &History) -> Vec<f64> {
    let mut out = y.to_vec();
    let w_hist = match f_new {
        Some(f) => {
            let c = h * weights[0];
            for (o, fi) in out.iter_mut().zip(f) {
                *o += c * fi;
            }
            &weights[1..]
        }
        None => weights,
    };
    for (w, f) in w_hist.iter().zip(&hist.fs) {
        let c = h * w;
        for (o, fi) in out.iter_mut().zip(f) {
            *o += c * fi;
        }
    }
    out
}

/// Corrector weights for the new point followed by the `k` history points.
fn corrector_weights(quad: &Quadrature, hist: &History, k: usize, t: f64, h: f64) -> Vec<f64> {
    let mut nodes = vec![1.0];
    nodes.extend(hist.nodes(k, t, h));
    quad.weights(&nodes, 1.0)
}

pub(super) fn run<F>(
    rhs: &mut Counted<F>,
    y0: &[f64],
    t0: f64,
    t1: f64,
    sampler: &mut Sampler<'_>,
    stats: &mut Stats,
    cfg: &IntegratorConfig,
) -> Result<()>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let quad = Quadrature::new();
    let hmax = cfg.max_step();
    let mut t = t0;
    let mut y = y0.to_vec();
    sampler.record(t, &y, |_| unreachable!());
    let f0 = rhs.call(t, &y)?;
    if !all_finite(&f0) {
        return Err(RonsError::NonFinite("right-hand side at the initial state"));
    }
    let mut h = match cfg.initial_step {
        Some(h) => h,
        None => starting_step(rhs, t, &y, &f0, cfg)?,
    }
    .min(t1 - t0)
    .min(hmax);
    let mut hist = History {
        ts: VecDeque::from([t]),
        fs: VecDeque::from([f0]),
    };
    let mut order = 1usize;
    let mut steps_at_order = 0usize;

    while t < t1 {
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return Err(RonsError::MaxSteps {
                max_steps: cfg.max_steps,
                t,
            });
        }
        if 0.1 * h.abs() <= t.abs() * f64::EPSILON || h < 1e-300 {
            return Err(RonsError::StepUnderflow { t, h });
        }
        h = h.min(hmax);
        let last = t + 1.01 * h >= t1;
        if last {
            h = t1 - t;
        }
        let k = order.min(hist.ts.len());

        let wp = quad.weights(&hist.nodes(k, t, h), 1.0);
        let y_pred = combine(&y, h, &wp, None, &hist);
        let f_pred = rhs.call(t + h, &y_pred)?;
        if !all_finite(&f_pred) {
            stats.rejected += 1;
            h *= 0.1;
            continue;
        }
        let estimate = |kk: usize| -> (Vec<f64>, f64) {
            let wp = quad.weights(&hist.nodes(kk, t, h), 1.0);
            let yp = combine(&y, h, &wp, None, &hist);
            let wc = corrector_weights(&quad, &hist, kk, t, h);
            let yc = combine(&y, h, &wc, Some(&f_pred), &hist);
            let diff: Vec<f64> = yc.iter().zip(&yp).map(|(a, b)| a - b).collect();
            let err = error_norm(&diff, &y, &yc, cfg.rtol, cfg.atol);
            (yc, err)
        };
        let (y_corr, err) = estimate(k);
        let step_factor = |e: f64, kk: usize| SAFE * e.max(1e-10).powf(-1.0 / (kk as f64 + 1.0));

        if !(err <= 1.0) || !all_finite(&y_corr) {
            stats.rejected += 1;
            let fac = if err.is_finite() {
                step_factor(err, k).clamp(0.1, 0.5)
            } else {
                0.1
            };
            if k > 1 && err.is_finite() {
                let (_, err_lower) = estimate(k - 1);
                if err_lower < err {
                    order = k - 1;
                    steps_at_order = 0;
                }
            }
            h *= fac;
            continue;
        }

        let t_new = if last { t1 } else { t + h };
        let f_corr = rhs.call(t_new, &y_corr)?;
        if !all_finite(&f_corr) {
            stats.rejected += 1;
            h *= 0.1;
            continue;
        }
        stats.accepted += 1;
        steps_at_order += 1;

        let (t_old, h_step, y_old) = (t, h, y.clone());
        sampler.record(t_new, &y_corr, |ts| {
            let theta = (ts - t_old) / h_step;
            let mut nodes = vec![1.0];
            nodes.extend(hist.nodes(k, t_old, h_step));
            let wc = quad.weights(&nodes, theta);
            combine(&y_old, h_step, &wc, Some(&f_pred), &hist)
        });

        // order selection among k-1, k, k+1
        let mut best = (step_factor(err, k), k);
        if k > 1 {
            let (_, e) = estimate(k - 1);
            let r = step_factor(e, k - 1);
            if r > best.0 {
                best = (r, k - 1);
            }
        }
        if k < MAX_ORDER && hist.ts.len() > k && steps_at_order > k {
            let (_, e) = estimate(k + 1);
            let r = step_factor(e, k + 1);
            if r > best.0 {
                best = (r, k + 1);
            }
        }
        if best.1 != order {
            order = best.1;
            steps_at_order = 0;
        }
        let factor = best.0.clamp(0.5, MAX_GROWTH);

        hist.push(t_new, f_corr);
        t = t_new;
        y = y_corr;
        if last {
            break;
        }
        h *= factor;
    }
    Ok(())
}

fn starting_step<F>(
    rhs: &mut Counted<F>,
    t: f64,
    y: &[f64],
    f0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<f64>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let n = y.len().max(1) as f64;
    let sk: Vec<f64> = y.iter().map(|v| cfg.atol + cfg.rtol * v.abs()).collect();
    let dnf = (f0.iter().zip(&sk).map(|(f, s)| (f / s).powi(2)).sum::<f64>() / n).sqrt();
    if dnf == 0.0 {
        let probe = 1e-6;
        let y1: Vec<f64> = y.to_vec();
        let f1 = rhs.call(t + probe, &y1)?;
        if f1.iter().all(|v| *v == 0.0) {
            return Ok(f64::INFINITY);
        }
        return Ok(probe);
    }
    // first-order start: local error h²|f'|/2 within tolerance
    let h = 1e-3 / dnf;
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, f)| a + h * f).collect();
    let f1 = rhs.call(t + h, &y1)?;
    let der2 = (f1
        .iter()
        .zip(f0)
        .zip(&sk)
        .map(|((a, b), s)| ((a - b) / s).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h;
    if der2 > 0.0 && der2.is_finite() {
        Ok((0.5 / der2).sqrt().min(100.0 * h).max(1e-12 * (1.0 + t.abs())))
    } else {
        Ok(100.0 * h)
    }
}

use super::{all_finite, error_norm, Counted, IntegratorConfig, Sampler, Stats};
use crate::error::{Result, RonsError};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// PI controller
const SAFE: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

fn axpy(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for (c, k) in terms {
        let hc = h * c;
        for (o, ki) in out.iter_mut().zip(k.iter()) {
            *o += hc * ki;
        }
    }
    out
}

fn initial_step<F>(
    rhs: &mut Counted<F>,
    t: f64,
    y: &[f64],
    f0: &[f64],
    span: f64,
    cfg: &IntegratorConfig,
) -> Result<f64>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let hmax = cfg.max_step().min(span);
    let n = y.len().max(1) as f64;
    let sk: Vec<f64> = y.iter().map(|v| cfg.atol + cfg.rtol * v.abs()).collect();
    let dnf: f64 = f0.iter().zip(&sk).map(|(f, s)| (f / s).powi(2)).sum::<f64>() / n;
    let dny: f64 = y.iter().zip(&sk).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n;
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(hmax);
    let y1 = axpy(y, h, &[(1.0, f0)]);
    let f1 = rhs.call(t + h, &y1)?;
    if dnf == 0.0 && f1.iter().all(|v| *v == 0.0) {
        return Ok(hmax);
    }
    let der2 = (f1
        .iter()
        .zip(f0)
        .zip(&sk)
        .map(|((a, b), s)| ((a - b) / s).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h;
    let der12 = der2.abs().max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 || !der12.is_finite() {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    Ok((100.0 * h).min(h1).min(hmax))
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
    let hmax = cfg.max_step();
    let mut t = t0;
    let mut y = y0.to_vec();
    sampler.record(t, &y, |_| unreachable!());
    let mut k1 = rhs.call(t, &y)?;
    if !all_finite(&k1) {
        return Err(RonsError::NonFinite("right-hand side at the initial state"));
    }
    let mut h = match cfg.initial_step {
        Some(h) => h.min(t1 - t0),
        None => initial_step(rhs, t, &y, &k1, t1 - t0, cfg)?,
    };
    let expo1 = 0.2 - BETA * 0.75;
    let mut facold: f64 = 1e-4;
    let mut rejected_last = false;

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

        let k2 = rhs.call(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]))?;
        let k3 = rhs.call(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]))?;
        let k4 = rhs.call(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = rhs.call(
            t + C5 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        )?;
        let k6 = rhs.call(
            t + h,
            &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        )?;
        let y_new = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = rhs.call(t + h, &y_new)?;

        let err_vec: Vec<f64> = (0..y.len())
            .map(|i| h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]))
            .collect();
        let err = error_norm(&err_vec, &y, &y_new, cfg.rtol, cfg.atol);
        if !err.is_finite() || !all_finite(&y_new) || !all_finite(&k7) {
            stats.rejected += 1;
            rejected_last = true;
            h *= 0.1;
            continue;
        }

        let fac11 = err.powf(expo1);
        let fac = (fac11 / facold.powf(BETA) / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
        let mut h_new = h / fac;

        if err <= 1.0 {
            facold = err.max(1e-4);
            stats.accepted += 1;
            let t_new = if last { t1 } else { t + h };
            // continuous extension
            let n = y.len();
            let mut r = vec![[0.0f64; 5]; n];
            for i in 0..n {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                r[i] = [
                    y[i],
                    ydiff,
                    bspl,
                    ydiff - h * k7[i] - bspl,
                    h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]),
                ];
            }
            let (t_old, h_step) = (t, h);
            sampler.record(t_new, &y_new, |ts| {
                let s = (ts - t_old) / h_step;
                let s1 = 1.0 - s;
                r.iter()
                    .map(|c| c[0] + s * (c[1] + s1 * (c[2] + s * (c[3] + s1 * c[4]))))
                    .collect()
            });
            k1 = k7;
            y = y_new;
            t = t_new;
            if rejected_last {
                h_new = h_new.min(h);
            }
            rejected_last = false;
            if last {
                break;
            }
        } else {
            h_new = h / (1.0 / FAC_MIN).min(fac11 / SAFE);
            stats.rejected += 1;
            rejected_last = true;
        }
        h = h_new;
    }
    Ok(())
}

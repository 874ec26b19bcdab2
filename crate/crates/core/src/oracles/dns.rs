//! Fourier pseudo-spectral Kuramoto–Sivashinsky solver,
//! `u_t = -u u_x - u_xx - u_xxxx` on `[-ℓ, ℓ)`, advanced with ETDRK4 and
//! dealiased by the 2/3 rule.

use std::io::Write;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RonsError};

const BLOW_UP: f64 = 1e6;
const CONTOUR_POINTS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DnsConfig {
    pub modes: usize,
    pub half_width: f64,
    pub dt: f64,
    /// Keep the `k² − k⁴` term; disabling it leaves inviscid Burgers.
    pub linear: bool,
    /// Keep the `−u u_x` term.
    pub nonlinear: bool,
}

impl Default for DnsConfig {
    fn default() -> Self {
        Self {
            modes: 128,
            half_width: 10.0,
            dt: 1e-3,
            linear: true,
            nonlinear: true,
        }
    }
}

pub struct KsDns {
    cfg: DnsConfig,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `i k` per mode, zero on the masked ones.
    ik: Vec<Complex64>,
    mask: Vec<bool>,
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
}

impl DnsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.modes < 4 || !self.modes.is_multiple_of(2) {
            return Err(RonsError::invalid("dns.modes", "must be an even number >= 4"));
        }
        if !(self.half_width > 0.0) || !(self.dt > 0.0) {
            return Err(RonsError::invalid("dns", "half_width and dt must be positive"));
        }
        Ok(())
    }
}

impl KsDns {
    pub fn new(cfg: DnsConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.modes;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let cutoff = n / 3;
        let mut ik = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        let mut lin = Vec::with_capacity(n);
        for m in 0..n {
            let signed = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
            let k = std::f64::consts::PI * signed / cfg.half_width;
            let keep = (signed.abs() as usize) <= cutoff && m != n / 2;
            mask.push(keep);
            ik.push(if keep { Complex64::new(0.0, k) } else { Complex64::new(0.0, 0.0) });
            lin.push(if cfg.linear { k * k - k.powi(4) } else { 0.0 });
        }
        let h = cfg.dt;
        let mut coeffs = (vec![], vec![], vec![], vec![], vec![], vec![]);
        for l in &lin {
            let (e, e2, q, f1, f2, f3) = etdrk4_coefficients(h * l, h);
            coeffs.0.push(e);
            coeffs.1.push(e2);
            coeffs.2.push(q);
            coeffs.3.push(f1);
            coeffs.4.push(f2);
            coeffs.5.push(f3);
        }
        Ok(Self {
            cfg,
            forward,
            inverse,
            ik,
            mask,
            e: coeffs.0,
            e2: coeffs.1,
            q: coeffs.2,
            f1: coeffs.3,
            f2: coeffs.4,
            f3: coeffs.5,
        })
    }

    pub fn config(&self) -> &DnsConfig {
        &self.cfg
    }

    /// Grid points `x_j = -ℓ + 2ℓj/N`.
    pub fn grid(&self) -> Vec<f64> {
        crate::crons::equidistant_points(self.cfg.half_width, self.cfg.modes)
    }

    fn to_spectral(&self, u: &[f64]) -> Vec<Complex64> {
        let mut v: Vec<Complex64> = u.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        self.forward.process(&mut v);
        for (vi, keep) in v.iter_mut().zip(&self.mask) {
            if !keep {
                *vi = Complex64::new(0.0, 0.0);
            }
        }
        v
    }

    fn to_physical(&self, v: &[Complex64]) -> Vec<f64> {
        let mut u = v.to_vec();
        self.inverse.process(&mut u);
        let scale = 1.0 / self.cfg.modes as f64;
        u.iter().map(|c| c.re * scale).collect()
    }

    /// Spectral `−(u²/2)_x`, dealiased.
    fn nonlinear(&self, v: &[Complex64]) -> Vec<Complex64> {
        if !self.cfg.nonlinear {
            return vec![Complex64::new(0.0, 0.0); v.len()];
        }
        let u = self.to_physical(v);
        let mut w: Vec<Complex64> = u.iter().map(|x| Complex64::new(0.5 * x * x, 0.0)).collect();
        self.forward.process(&mut w);
        w.iter().zip(&self.ik).map(|(wi, ik)| -ik * wi).collect()
    }

    fn step(&self, v: &mut [Complex64]) {
        let nv = self.nonlinear(v);
        let a: Vec<Complex64> = (0..v.len()).map(|m| self.e2[m] * v[m] + self.q[m] * nv[m]).collect();
        let na = self.nonlinear(&a);
        let b: Vec<Complex64> = (0..v.len()).map(|m| self.e2[m] * v[m] + self.q[m] * na[m]).collect();
        let nb = self.nonlinear(&b);
        let c: Vec<Complex64> = (0..v.len())
            .map(|m| self.e2[m] * a[m] + self.q[m] * (2.0 * nb[m] - nv[m]))
            .collect();
        let nc = self.nonlinear(&c);
        for m in 0..v.len() {
            v[m] = if self.mask[m] {
                self.e[m] * v[m]
                    + nv[m] * self.f1[m]
                    + 2.0 * (na[m] + nb[m]) * self.f2[m]
                    + nc[m] * self.f3[m]
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
    }

    /// Spectral coefficients of the masked (dealiased-away) modes.
    pub fn masked_energy(&self, u: &[f64]) -> f64 {
        let mut v: Vec<Complex64> = u.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        self.forward.process(&mut v);
        v.iter().zip(&self.mask).filter(|(_, k)| !**k).map(|(c, _)| c.norm_sqr()).sum()
    }

    /// Advances `u0` (grid values at time 0) and returns snapshots at `times`,
    /// which must be non-negative, increasing multiples of `dt`.
    pub fn run(&self, u0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
        if u0.len() != self.cfg.modes {
            return Err(RonsError::Dimension {
                expected: self.cfg.modes,
                got: u0.len(),
            });
        }
        let mut v = self.to_spectral(u0);
        let mut steps_done = 0usize;
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            let target = (t / self.cfg.dt).round();
            if t < 0.0 || (target * self.cfg.dt - t).abs() > 1e-9 * t.max(1.0) {
                return Err(RonsError::invalid(
                    "dns.times",
                    format!("sample time {t} is not a multiple of dt = {}", self.cfg.dt),
                ));
            }
            let target = target as usize;
            if target < steps_done {
                return Err(RonsError::invalid("dns.times", "sample times must be increasing"));
            }
            while steps_done < target {
                self.step(&mut v);
                steps_done += 1;
            }
            let u = self.to_physical(&v);
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm <= BLOW_UP) {
                return Err(RonsError::BlowUp { t, norm });
            }
            out.push(u);
        }
        Ok(out)
    }
}

/// ETDRK4 scalars for `z = hL`, evaluated by averaging over a contour of
/// radius one around `z` to avoid cancellation near `z = 0`.
fn etdrk4_coefficients(z: f64, h: f64) -> (f64, f64, f64, f64, f64, f64) {
    let mut acc = [0.0f64; 4];
    for j in 0..CONTOUR_POINTS {
        let theta = std::f64::consts::PI * (j as f64 + 0.5) / CONTOUR_POINTS as f64;
        let r = Complex64::new(theta.cos(), theta.sin());
        let lr = z + r;
        let e = lr.exp();
        let e_half = (lr * 0.5).exp();
        let lr3 = lr * lr * lr;
        acc[0] += ((e_half - 1.0) / lr).re;
        acc[1] += ((-4.0 - lr + e * (4.0 - 3.0 * lr + lr * lr)) / lr3).re;
        acc[2] += ((2.0 + lr + e * (-2.0 + lr)) / lr3).re;
        acc[3] += ((-4.0 - 3.0 * lr - lr * lr + e * (4.0 - lr)) / lr3).re;
    }
    let m = CONTOUR_POINTS as f64;
    (
        z.exp(),
        (z / 2.0).exp(),
        h * acc[0] / m,
        h * acc[1] / m,
        h * acc[2] / m,
        h * acc[3] / m,
    )
}

/// Writes snapshots as CSV: header `t,x_0,…`, one row per time.
pub fn write_snapshots_csv<W: Write>(
    mut w: W,
    grid: &[f64],
    times: &[f64],
    snapshots: &[Vec<f64>],
) -> std::io::Result<()> {
    write!(w, "t")?;
    for x in grid {
        write!(w, ",x={x:.16e}")?;
    }
    writeln!(w)?;
    for (t, u) in times.iter().zip(snapshots) {
        write!(w, "{t:.16e}")?;
        for v in u {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

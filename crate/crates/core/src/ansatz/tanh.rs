use std::f64::consts::PI;

use super::{Ansatz, Domain};
use crate::error::{Result, RonsError};

/// Parameters per tanh unit: amplitude, weight, phase bias, offset bias.
pub const TANH_SLOTS: usize = 4;

const AMP: usize = 0;
const WEIGHT: usize = 1;
const PHASE: usize = 2;
const OFFSET: usize = 3;

/// Shallow tanh network on the periodic interval `[-ℓ, ℓ]`:
/// `û(x) = Σ A_i tanh(w_i sin(πx/ℓ + c_i) + d_i)`.
///
/// The inner `sin` makes every unit exactly `2ℓ`-periodic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TanhNetwork {
    half_width: f64,
}

/// Per-unit intermediate quantities at one point.
struct Unit {
    amp: f64,
    weight: f64,
    sin: f64,
    cos: f64,
    tanh: f64,
}

impl TanhNetwork {
    pub fn new(half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(RonsError::invalid("half_width", "must be positive and finite"));
        }
        Ok(Self { half_width })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Angular wavenumber `π/ℓ` of the coordinate transform.
    pub fn wavenumber(&self) -> f64 {
        PI / self.half_width
    }

    fn unit(&self, x: f64, m: &[f64]) -> Unit {
        let theta = PI * (x / self.half_width) + m[PHASE];
        let (sin, cos) = theta.sin_cos();
        Unit {
            amp: m[AMP],
            weight: m[WEIGHT],
            sin,
            cos,
            tanh: (m[WEIGHT] * sin + m[OFFSET]).tanh(),
        }
    }

    /// `[û, û_x, û_xx, û_xxx, û_xxxx]` at `x`, via the chain rule through
    /// `tanh` and `sin`.
    pub fn x_derivatives(&self, x: f64, q: &[f64]) -> [f64; 5] {
        let k = self.wavenumber();
        let mut out = [0.0; 5];
        for m in q.chunks_exact(TANH_SLOTS) {
            let u = self.unit(x, m);
            let t = u.tanh;
            let sech2 = 1.0 - t * t;
            // derivatives of tanh with respect to its argument
            let g1 = sech2;
            let g2 = -2.0 * t * sech2;
            let g3 = sech2 * (6.0 * t * t - 2.0);
            let g4 = sech2 * 8.0 * t * (2.0 - 3.0 * t * t);
            // derivatives of the argument w·sin(kx + c) + d
            let w = u.weight;
            let z1 = w * k * u.cos;
            let z2 = -w * k * k * u.sin;
            let z3 = -w * k * k * k * u.cos;
            let z4 = w * k * k * k * k * u.sin;
            out[0] += u.amp * t;
            out[1] += u.amp * g1 * z1;
            out[2] += u.amp * (g2 * z1 * z1 + g1 * z2);
            out[3] += u.amp * (g3 * z1 * z1 * z1 + 3.0 * g2 * z1 * z2 + g1 * z3);
            out[4] += u.amp
                * (g4 * z1.powi(4)
                    + 6.0 * g3 * z1 * z1 * z2
                    + g2 * (4.0 * z1 * z3 + 3.0 * z2 * z2)
                    + g1 * z4);
        }
        out
    }
}

impl Ansatz for TanhNetwork {
    fn name(&self) -> &'static str {
        "tanh_network"
    }

    fn dim(&self) -> usize {
        1
    }

    fn per_mode(&self) -> usize {
        TANH_SLOTS
    }

    fn domain(&self) -> Domain {
        Domain::Periodic {
            half_width: self.half_width,
        }
    }

    fn value(&self, x: &[f64], q: &[f64]) -> f64 {
        q.chunks_exact(TANH_SLOTS)
            .map(|m| {
                let u = self.unit(x[0], m);
                u.amp * u.tanh
            })
            .sum()
    }

    fn jacobian_into(&self, x: &[f64], q: &[f64], out: &mut [f64]) {
        for (m, block) in q.chunks_exact(TANH_SLOTS).zip(out.chunks_exact_mut(TANH_SLOTS)) {
            let u = self.unit(x[0], m);
            let a_sech2 = u.amp * (1.0 - u.tanh * u.tanh);
            block[AMP] = u.tanh;
            block[WEIGHT] = a_sech2 * u.sin;
            block[PHASE] = a_sech2 * u.weight * u.cos;
            block[OFFSET] = a_sech2;
        }
    }
}

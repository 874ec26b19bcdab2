use super::{Ansatz, Domain};

/// Isotropic Gaussian mixture `û(x) = Σ A_i² exp(-w_i² |x - c_i|²)` on `ℝᵈ`.
///
/// Per-mode layout is `(A, w, c₁, …, c_d)`, so `K = d + 2`. Amplitudes enter
/// squared, hence the mixture is non-negative for any real parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaussianMixture {
    dim: usize,
}

/// Value, gradient and Laplacian of a mixture at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDerivatives {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub laplacian: f64,
}

pub const AMPLITUDE: usize = 0;
pub const WIDTH: usize = 1;
pub const CENTER: usize = 2;

impl GaussianMixture {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "mixture dimension must be positive");
        Self { dim }
    }

    pub(crate) fn modes<'a>(&self, q: &'a [f64]) -> impl Iterator<Item = &'a [f64]> {
        q.chunks_exact(self.dim + 2)
    }

    fn squared_distance(x: &[f64], c: &[f64]) -> f64 {
        x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// Analytic value, gradient and Laplacian of the mixture.
    pub fn derivatives(&self, x: &[f64], q: &[f64]) -> MixtureDerivatives {
        let d = self.dim;
        let mut value = 0.0;
        let mut gradient = vec![0.0; d];
        let mut laplacian = 0.0;
        for m in self.modes(q) {
            let (a, w, c) = (m[AMPLITUDE], m[WIDTH], &m[CENTER..]);
            let beta = w * w;
            let r2 = Self::squared_distance(x, c);
            let g = a * a * (-beta * r2).exp();
            value += g;
            for k in 0..d {
                gradient[k] -= 2.0 * beta * (x[k] - c[k]) * g;
            }
            laplacian += (4.0 * beta * beta * r2 - 2.0 * beta * d as f64) * g;
        }
        MixtureDerivatives {
            value,
            gradient,
            laplacian,
        }
    }
}

impl Ansatz for GaussianMixture {
    fn name(&self) -> &'static str {
        "gaussian_mixture"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn per_mode(&self) -> usize {
        self.dim + 2
    }

    fn domain(&self) -> Domain {
        Domain::Unbounded { dim: self.dim }
    }

    fn value(&self, x: &[f64], q: &[f64]) -> f64 {
        self.modes(q)
            .map(|m| {
                let r2 = Self::squared_distance(x, &m[CENTER..]);
                m[AMPLITUDE] * m[AMPLITUDE] * (-m[WIDTH] * m[WIDTH] * r2).exp()
            })
            .sum()
    }

    fn jacobian_into(&self, x: &[f64], q: &[f64], out: &mut [f64]) {
        let k = self.per_mode();
        for (m, block) in self.modes(q).zip(out.chunks_exact_mut(k)) {
            let (a, w, c) = (m[AMPLITUDE], m[WIDTH], &m[CENTER..]);
            let r2 = Self::squared_distance(x, c);
            let e = (-w * w * r2).exp();
            let g = a * a * e;
            block[AMPLITUDE] = 2.0 * a * e;
            block[WIDTH] = -2.0 * w * r2 * g;
            for (slot, (xi, ci)) in block[CENTER..].iter_mut().zip(x.iter().zip(c)) {
                *slot = 2.0 * w * w * (xi - ci) * g;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{eval_gaussian_mixture, param_jacobian, ParameterState};
    use proptest::prelude::*;

    fn single(d: usize, a: f64, w: f64, c: &[f64]) -> ParameterState {
        let mut m = vec![a, w];
        m.extend_from_slice(c);
        assert_eq!(m.len(), d + 2);
        ParameterState::from_modes(0.0, &[m]).unwrap()
    }

    #[test]
    fn unit_gaussian_at_center_is_one() {
        let q = single(1, 1.0, 1.0, &[0.0]);
        assert_eq!(eval_gaussian_mixture(&[0.0], &q).unwrap(), 1.0);
    }

    #[test]
    fn center_value_equals_squared_amplitude_in_eight_dimensions() {
        let a2 = (2.0 * std::f64::consts::PI * 0.1_f64).powi(-4);
        let mu: Vec<f64> = (0..8).map(|i| 0.9 + 2.1 * i as f64 / 7.0).collect();
        let q = single(8, a2.sqrt(), 5f64.sqrt(), &mu);
        let v = eval_gaussian_mixture(&mu, &q).unwrap();
        assert!((v - a2).abs() <= 1e-15 * a2);
    }

    #[test]
    fn mixture_is_additive_over_modes() {
        let m1 = vec![0.7, 1.3, 0.2, -0.4];
        let m2 = vec![-1.1, 0.6, -0.5, 0.9];
        let both = ParameterState::from_modes(0.0, &[m1.clone(), m2.clone()]).unwrap();
        let x = [0.3, 0.1];
        let sum = eval_gaussian_mixture(&x, &ParameterState::from_modes(0.0, &[m1]).unwrap())
            .unwrap()
            + eval_gaussian_mixture(&x, &ParameterState::from_modes(0.0, &[m2]).unwrap()).unwrap();
        assert!((eval_gaussian_mixture(&x, &both).unwrap() - sum).abs() < 1e-15);
    }

    #[test]
    fn amplitude_derivative_at_center_is_twice_amplitude() {
        let q = single(3, 1.7, 0.8, &[0.1, 0.2, 0.3]);
        let j = param_jacobian(&GaussianMixture::new(3), &[0.1, 0.2, 0.3], &q).unwrap();
        assert!((j[0] - 3.4).abs() < 1e-15);
    }

    #[test]
    fn analytic_spatial_derivatives_match_differences() {
        let f = GaussianMixture::new(2);
        let q = [0.9, 1.1, 0.3, -0.2, -0.6, 0.7, -0.4, 0.5];
        let x = [0.2, 0.1];
        let der = f.derivatives(&x, &q);
        let h = 1e-4;
        let mut lap = 0.0;
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let (vp, vm) = (f.value(&xp, &q), f.value(&xm, &q));
            let grad_fd = (vp - vm) / (2.0 * h);
            assert!((grad_fd - der.gradient[k]).abs() < 1e-7, "gradient {k}");
            lap += (vp - 2.0 * der.value + vm) / (h * h);
        }
        assert!((lap - der.laplacian).abs() < 1e-5 * der.laplacian.abs().max(1.0));
    }

    proptest! {
        #[test]
        fn mixture_is_non_negative(
            params in prop::collection::vec(-3.0f64..3.0, 8),
            x in prop::collection::vec(-3.0f64..3.0, 2),
        ) {
            let f = GaussianMixture::new(2);
            prop_assert!(f.value(&x, &params) >= 0.0);
        }
    }
}

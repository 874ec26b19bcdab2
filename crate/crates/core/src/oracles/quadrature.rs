//! Quadrature oracles: Gauss–Hermite (tensor product, shifted and scaled) on
//! `ℝᵈ` and the trapezoid rule on periodic intervals.

use nalgebra::{DMatrix, DVector};

use crate::ansatz::{Ansatz, Domain, GaussianMixture, ParameterState};
use crate::error::{Result, RonsError};
use crate::pde::{FokkerPlanck, PdeOperator};

/// Nodes and weights for `∫ e^{-x²} f(x) dx`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `w_k e^{x_k²}`, for integrands that carry their own Gaussian.
    scaled: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut scaled = vec![0.0; n];
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let nf = n as f64;
        let mut z: f64 = 0.0;
        for i in 0..n.div_ceil(2) {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                // orthonormal Hermite recurrence
                let (mut p1, mut p2) = (pim4, 0.0);
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
            scaled[i] = w[i] * (z * z).exp();
            scaled[n - 1 - i] = scaled[i];
        }
        if n % 2 == 1 {
            x[n / 2] = 0.0;
        }
        Self {
            nodes: x,
            weights: w,
            scaled,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫ e^{-x²} f(x) dx`.
    pub fn integrate_weighted(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

/// Tensor-product rule for `∫_{ℝᵈ} g(x) dx` built around the Gaussian
/// `exp(-rate·|x - center|²)`: exact when `g` is that Gaussian times a
/// polynomial of degree `≤ 2n − 1` in each coordinate.
#[derive(Debug, Clone)]
pub struct GaussHermiteTensor {
    rule: GaussHermite,
    center: Vec<f64>,
    rate: f64,
}

impl GaussHermiteTensor {
    pub fn new(nodes_per_dim: usize, center: Vec<f64>, rate: f64) -> Self {
        Self {
            rule: GaussHermite::new(nodes_per_dim),
            center,
            rate,
        }
    }

    pub fn integrate(&self, mut g: impl FnMut(&[f64]) -> f64) -> f64 {
        let mut total = 0.0;
        self.for_each_node(|x, w| total += w * g(x));
        total
    }

    /// Calls `visit(x, weight)` for every tensor node.
    pub fn for_each_node(&self, mut visit: impl FnMut(&[f64], f64)) {
        let d = self.center.len();
        let n = self.rule.nodes.len();
        let inv_sqrt = 1.0 / self.rate.sqrt();
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0; d];
        loop {
            let mut w = inv_sqrt.powi(d as i32);
            for k in 0..d {
                x[k] = self.center[k] + self.rule.nodes[idx[k]] * inv_sqrt;
                w *= self.rule.scaled[idx[k]];
            }
            visit(&x, w);
            let mut k = 0;
            loop {
                if k == d {
                    return;
                }
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }
}

/// `∫_{-ℓ}^{ℓ} f(x) dx` by the trapezoid rule on `nodes` equispaced points of
/// `[-ℓ, ℓ)`; spectrally accurate for smooth periodic `f`.
pub fn periodic_trapezoid(half_width: f64, nodes: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let h = 2.0 * half_width / nodes as f64;
    (0..nodes).map(|i| f(-half_width + i as f64 * h)).sum::<f64>() * h
}

/// Quadrature scheme for [`quadrature_inner_product`].
#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    /// Tensor Gauss–Hermite around `exp(-rate|x - center|²)`.
    GaussHermite {
        nodes: usize,
        center: Vec<f64>,
        rate: f64,
    },
    Trapezoid {
        nodes: usize,
    },
}

/// `⟨u, v⟩ = ∫_D u v dx` over `domain` with `scheme`.
pub fn quadrature_inner_product(
    domain: Domain,
    scheme: &Scheme,
    mut u: impl FnMut(&[f64]) -> f64,
    mut v: impl FnMut(&[f64]) -> f64,
) -> Result<f64> {
    match (domain, scheme) {
        (Domain::Unbounded { dim }, Scheme::GaussHermite { nodes, center, rate }) => {
            if center.len() != dim {
                return Err(RonsError::Dimension {
                    expected: dim,
                    got: center.len(),
                });
            }
            Ok(GaussHermiteTensor::new(*nodes, center.clone(), *rate).integrate(|x| u(x) * v(x)))
        }
        (Domain::Periodic { half_width }, Scheme::Trapezoid { nodes }) => {
            Ok(periodic_trapezoid(half_width, *nodes, |x| u(&[x]) * v(&[x])))
        }
        (Domain::Unbounded { .. }, Scheme::Trapezoid { .. }) => Err(RonsError::UnsupportedScheme(
            "trapezoid rule requires a periodic domain",
        )),
        (Domain::Periodic { .. }, Scheme::GaussHermite { .. }) => Err(RonsError::UnsupportedScheme(
            "Gauss-Hermite rule requires an unbounded domain",
        )),
    }
}

/// Center and rate of the product `exp(-w_i²|x-c_i|²)·exp(-w_j²|x-c_j|²)`.
fn product_gaussian(mode_i: &[f64], mode_j: &[f64]) -> (Vec<f64>, f64) {
    let (a, b) = (mode_i[1] * mode_i[1], mode_j[1] * mode_j[1]);
    let s = a + b;
    let center = mode_i[2..]
        .iter()
        .zip(&mode_j[2..])
        .map(|(ci, cj)| (a * ci + b * cj) / s)
        .collect();
    (center, s)
}

/// `⟨∂g_i/∂(slot a), ∂g_j/∂(slot b)⟩` for all slot pairs of two modes, by
/// quadrature of the ansatz Jacobian.
pub fn pair_metric_quadrature(mode_i: &[f64], mode_j: &[f64], nodes_per_dim: usize) -> DMatrix<f64> {
    let k = mode_i.len();
    let family = GaussianMixture::new(k - 2);
    let (center, rate) = product_gaussian(mode_i, mode_j);
    let rule = GaussHermiteTensor::new(nodes_per_dim, center, rate);
    let mut out = DMatrix::zeros(k, k);
    let (mut ji, mut jj) = (vec![0.0; k], vec![0.0; k]);
    rule.for_each_node(|x, w| {
        family.jacobian_into(x, mode_i, &mut ji);
        family.jacobian_into(x, mode_j, &mut jj);
        for b in 0..k {
            for a in 0..k {
                out[(a, b)] += w * ji[a] * jj[b];
            }
        }
    });
    out
}

/// `⟨∂g_i/∂(slot a), F(g_k)⟩` for every slot of test mode `i`.
pub fn pair_rhs_quadrature(
    pde: &FokkerPlanck,
    mode_i: &[f64],
    mode_k: &[f64],
    t: f64,
    nodes_per_dim: usize,
) -> DVector<f64> {
    let k = mode_i.len();
    let family = GaussianMixture::new(k - 2);
    let (center, rate) = product_gaussian(mode_i, mode_k);
    let rule = GaussHermiteTensor::new(nodes_per_dim, center, rate);
    let mut out = DVector::zeros(k);
    let mut ji = vec![0.0; k];
    rule.for_each_node(|x, w| {
        family.jacobian_into(x, mode_i, &mut ji);
        let f = w * pde.rhs(&family, x, t, mode_k);
        for a in 0..k {
            out[a] += ji[a] * f;
        }
    });
    out
}

/// Brute-force metric tensor of a Gaussian mixture, entry by entry.
pub fn gaussian_metric_quadrature(q: &ParameterState, nodes_per_dim: usize) -> Result<DMatrix<f64>> {
    let layout = q.layout();
    let (r, k) = (layout.modes(), layout.per_mode());
    if k < 3 {
        return Err(RonsError::layout("at least 3 parameters per mode", k));
    }
    let mut m = DMatrix::zeros(layout.len(), layout.len());
    for i in 0..r {
        for j in 0..r {
            let block = pair_metric_quadrature(q.mode(i), q.mode(j), nodes_per_dim);
            m.view_mut((i * k, j * k), (k, k)).copy_from(&block);
        }
    }
    Ok(m)
}

/// Brute-force Fokker–Planck right-hand side of a Gaussian mixture. `F` is
/// linear, so `⟨∂û/∂q, F(û)⟩` splits over source modes.
pub fn gaussian_rhs_quadrature(
    pde: &FokkerPlanck,
    q: &ParameterState,
    t: f64,
    nodes_per_dim: usize,
) -> Result<DVector<f64>> {
    let layout = q.layout();
    let (r, k) = (layout.modes(), layout.per_mode());
    if k != pde.dim + 2 {
        return Err(RonsError::layout(format!("{} parameters per mode", pde.dim + 2), k));
    }
    let mut f = DVector::zeros(layout.len());
    for i in 0..r {
        for src in 0..r {
            let block = pair_rhs_quadrature(pde, q.mode(i), q.mode(src), t, nodes_per_dim);
            let mut view = f.rows_mut(i * k, k);
            view += block;
        }
    }
    Ok(f)
}

/// Trapezoid-rule metric tensor `M = ∫ J Jᵀ dx` of a periodic family.
pub fn trapezoid_metric<A: Ansatz + ?Sized>(family: &A, q: &[f64], nodes: usize) -> Result<DMatrix<f64>> {
    let Domain::Periodic { half_width } = family.domain() else {
        return Err(RonsError::UnsupportedScheme("trapezoid rule requires a periodic domain"));
    };
    family.layout_for(q)?;
    let n = q.len();
    let h = 2.0 * half_width / nodes as f64;
    let mut jac = DMatrix::zeros(n, nodes);
    let mut row = vec![0.0; n];
    for i in 0..nodes {
        family.jacobian_into(&[-half_width + i as f64 * h], q, &mut row);
        jac.column_mut(i).copy_from_slice(&row);
    }
    let mut m = &jac * jac.transpose() * h;
    for i in 0..n {
        for j in 0..i {
            m[(j, i)] = m[(i, j)];
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn hermite_defining_integral() {
        let rule = GaussHermite::new(32);
        assert!((rule.integrate_weighted(|_| 1.0) - PI.sqrt()).abs() < 1e-12);
        // ∫ x² e^{-x²} = √π/2, ∫ x⁴ e^{-x²} = 3√π/4
        assert!((rule.integrate_weighted(|x| x * x) - PI.sqrt() / 2.0).abs() < 1e-12);
        assert!((rule.integrate_weighted(|x| x.powi(4)) - 0.75 * PI.sqrt()).abs() < 1e-12);
        let rule = GaussHermite::new(64);
        assert!((rule.integrate_weighted(|_| 1.0) - PI.sqrt()).abs() < 1e-12);
        assert!(rule.nodes().windows(2).all(|w| w[0] > w[1]) || rule.nodes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn small_rules_are_exact_to_degree_2n_minus_1() {
        for n in 1..=6 {
            let rule = GaussHermite::new(n);
            for p in 0..2 * n {
                let q = rule.integrate_weighted(|x| x.powi(p as i32));
                // ∫ x^p e^{-x²} = Γ((p+1)/2) for even p
                let exact = if p % 2 == 1 {
                    0.0
                } else {
                    let mut g = PI.sqrt();
                    let mut k = 0.5;
                    while k < (p as f64 + 1.0) / 2.0 {
                        g *= k;
                        k += 1.0;
                    }
                    g
                };
                assert!((q - exact).abs() < 1e-12 * exact.abs().max(1.0), "n={n} p={p}");
            }
        }
    }

    #[test]
    fn gaussian_product_in_two_dimensions() {
        let (c1, c2) = ([0.3, -0.4], [1.1, 0.5]);
        let u = |x: &[f64]| (-((x[0] - c1[0]).powi(2) + (x[1] - c1[1]).powi(2))).exp();
        let v = |x: &[f64]| (-((x[0] - c2[0]).powi(2) + (x[1] - c2[1]).powi(2))).exp();
        let scheme = Scheme::GaussHermite {
            nodes: 20,
            center: vec![0.0, 0.0],
            rate: 1.0,
        };
        let got = quadrature_inner_product(Domain::Unbounded { dim: 2 }, &scheme, u, v).unwrap();
        let d2 = (c1[0] - c2[0]).powi(2) + (c1[1] - c2[1]).powi(2);
        let exact = PI / 2.0 * (-d2 / 2.0).exp();
        assert!((got - exact).abs() < 1e-10);
    }

    #[test]
    fn trapezoid_on_sine_squared() {
        let l = 10.0;
        let got = quadrature_inner_product(
            Domain::Periodic { half_width: l },
            &Scheme::Trapezoid { nodes: 128 },
            |x| (PI * x[0] / l).sin(),
            |x| (PI * x[0] / l).sin(),
        )
        .unwrap();
        assert!((got - l).abs() < 1e-12);
    }

    #[test]
    fn mismatched_scheme_is_rejected() {
        let err = quadrature_inner_product(
            Domain::Unbounded { dim: 1 },
            &Scheme::Trapezoid { nodes: 8 },
            |_| 1.0,
            |_| 1.0,
        )
        .unwrap_err();
        assert_eq!(err.kind(), "unsupported_scheme");
        let err = quadrature_inner_product(
            Domain::Periodic { half_width: 1.0 },
            &Scheme::GaussHermite {
                nodes: 8,
                center: vec![0.0],
                rate: 1.0,
            },
            |_| 1.0,
            |_| 1.0,
        )
        .unwrap_err();
        assert_eq!(err.kind(), "unsupported_scheme");
    }

    #[test]
    fn hermite_error_decreases_with_nodes() {
        // a mis-centered Gaussian times a polynomial
        let f = |x: f64| (1.0 + x * x) * (-(x - 0.7f64).powi(2) * 1.6 + x * x).exp();
        let exact = {
            // ∫(1+x²) e^{-1.6(x-0.7)²} dx
            let s = 1.6f64;
            (PI / s).sqrt() * (1.0 + 0.49 + 1.0 / (2.0 * s))
        };
        let mut prev = f64::INFINITY;
        for n in [2, 4, 8, 16, 32] {
            let err = (GaussHermite::new(n).integrate_weighted(f) - exact).abs();
            assert!(err < prev || err < 1e-13, "n={n}: {err} vs {prev}");
            prev = err;
        }
        assert!(prev < 1e-12);
    }
}

//! Closed-form assembly of the metric tensor `M` and right-hand side `f` for
//! Gaussian mixtures under the Fokker–Planck operator.
//!
//! Every entry of `M` lies in some `K×K` block `M^(i,j)` pairing mode `i`
//! (rows) with mode `j` (columns). Entry `(a, b)` of a block with `a ≥ b` is
//! produced by one of `K(K+1)/2` kernels evaluated on the parameters of the
//! two modes; entries with `a < b` reuse kernel `(b, a)` with the two modes
//! swapped. The right-hand side uses `K` more kernels, one per slot of the
//! test mode. The kernels are Gaussian moment formulas; see
//! `docs/kernels.md` for the derivations.

use nalgebra::{DMatrix, DVector};

use crate::ansatz::{Ansatz, GaussianMixture, Layout, ParameterState};
use crate::error::{Result, RonsError};
use crate::pde::FokkerPlanck;

const AMP: usize = 0;
const WIDTH: usize = 1;
const CENTER: usize = 2;

/// Kernel producing entry `(row slot, col slot)` of a metric block, with
/// `row slot ≥ col slot`. Center indices are spatial coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKernel {
    AmpAmp,
    WidthAmp,
    WidthWidth,
    CenterAmp(usize),
    CenterWidth(usize),
    CenterCenter(usize, usize),
}

/// Kernel producing slot `a` of a right-hand-side block `f^(i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RhsKernel {
    Amp,
    Width,
    Center(usize),
}

/// Quantities shared by all kernels for an ordered pair of modes
/// `(row mode i, column mode j)`.
///
/// The product of the two Gaussians is `base · exp(-s|x - m|²)` with
/// `s = w_i² + w_j²`; `u = m - c_i`, `v = m - c_j`.
#[derive(Debug, Clone)]
pub struct PairGeometry {
    amp_i: f64,
    width_i: f64,
    amp_j: f64,
    width_j: f64,
    /// `∫ exp(-w_i²|x-c_i|²) exp(-w_j²|x-c_j|²) dx`.
    base: f64,
    /// Per-coordinate variance `1/(2s)` of the product Gaussian.
    sigma2: f64,
    center: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    u2: f64,
    v2: f64,
    uv: f64,
}

impl PairGeometry {
    pub fn new(mode_i: &[f64], mode_j: &[f64]) -> Self {
        let d = mode_i.len() - CENTER;
        let (a, b) = (mode_i[WIDTH].powi(2), mode_j[WIDTH].powi(2));
        let s = a + b;
        let (ci, cj) = (&mode_i[CENTER..], &mode_j[CENTER..]);
        let mut center = Vec::with_capacity(d);
        let mut u = Vec::with_capacity(d);
        let mut v = Vec::with_capacity(d);
        let mut delta2 = 0.0;
        for k in 0..d {
            let delta = ci[k] - cj[k];
            delta2 += delta * delta;
            center.push((a * ci[k] + b * cj[k]) / s);
            u.push(-b * delta / s);
            v.push(a * delta / s);
        }
        let base = (std::f64::consts::PI / s).powf(d as f64 / 2.0) * (-a * b / s * delta2).exp();
        let u2 = u.iter().map(|x| x * x).sum();
        let v2 = v.iter().map(|x| x * x).sum();
        let uv = u.iter().zip(&v).map(|(x, y)| x * y).sum();
        Self {
            amp_i: mode_i[AMP],
            width_i: mode_i[WIDTH],
            amp_j: mode_j[AMP],
            width_j: mode_j[WIDTH],
            base,
            sigma2: 1.0 / (2.0 * s),
            center,
            u,
            v,
            u2,
            v2,
            uv,
        }
    }

    fn dim(&self) -> usize {
        self.u.len()
    }
}

impl MetricKernel {
    /// `⟨∂û/∂(row slot of mode i), ∂û/∂(col slot of mode j)⟩_{L²(ℝᵈ)}`.
    pub fn eval(&self, g: &PairGeometry) -> f64 {
        let d = g.dim() as f64;
        let s2 = g.sigma2;
        let (ai, aj) = (g.amp_i, g.amp_j);
        let (wi, wj) = (g.width_i, g.width_j);
        let value = match *self {
            MetricKernel::AmpAmp => 4.0 * ai * aj,
            MetricKernel::WidthAmp => -4.0 * wi * ai * ai * aj * (d * s2 + g.u2),
            MetricKernel::WidthWidth => {
                let moment = d * (d + 2.0) * s2 * s2
                    + d * s2 * (g.u2 + g.v2)
                    + 4.0 * s2 * g.uv
                    + g.u2 * g.v2;
                4.0 * wi * wj * ai * ai * aj * aj * moment
            }
            MetricKernel::CenterAmp(k) => 4.0 * wi * wi * ai * ai * aj * g.u[k],
            MetricKernel::CenterWidth(k) => {
                let moment = g.u[k] * (d * s2 + g.v2) + 2.0 * s2 * g.v[k];
                -4.0 * wi * wi * ai * ai * wj * aj * aj * moment
            }
            MetricKernel::CenterCenter(k, l) => {
                let delta = if k == l { s2 } else { 0.0 };
                4.0 * wi * wi * wj * wj * ai * ai * aj * aj * (delta + g.u[k] * g.v[l])
            }
        };
        value * g.base
    }
}

/// Polynomial `Q(y) = q0 + q1·y + yᵀ Q2 y` with `F(g_j) = Q · g_j` written
/// about the center `m` of a pair geometry, for a source mode `j`.
struct SourceTerms {
    amp2: f64,
    q0: f64,
    q1: Vec<f64>,
    trace_q2: f64,
}

impl SourceTerms {
    fn new(pde: &FokkerPlanck, g: &PairGeometry, t: f64) -> Self {
        let d = g.dim() as f64;
        let alpha = pde.interaction;
        let nu = pde.diffusion;
        let beta = g.width_j * g.width_j;
        let a = pde.forcing.at(t);
        let sum_m: f64 = g.center.iter().sum();
        let sum_v: f64 = g.v.iter().sum();
        let mut q0 = pde.drift_compression() + nu * (4.0 * beta * beta * g.v2 - 2.0 * beta * d);
        let mut q1 = Vec::with_capacity(g.dim());
        for k in 0..g.dim() {
            // drift at m, and B·v with B = -(1+α)I + (α/d)11ᵀ
            let b0 = a - (1.0 + alpha) * g.center[k] + alpha / d * sum_m;
            let bv = -(1.0 + alpha) * g.v[k] + alpha / d * sum_v;
            q0 += 2.0 * beta * b0 * g.v[k];
            q1.push(2.0 * beta * (b0 + bv) + 8.0 * nu * beta * beta * g.v[k]);
        }
        let trace_q2 = 2.0 * beta * (alpha - d * (1.0 + alpha)) + 4.0 * nu * beta * beta * d;
        Self {
            amp2: g.amp_j * g.amp_j,
            q0,
            q1,
            trace_q2,
        }
    }
}

impl RhsKernel {
    /// Contribution of source mode `j` to `⟨∂û/∂(slot of mode i), F(û)⟩`.
    fn eval_pair(&self, g: &PairGeometry, src: &SourceTerms) -> f64 {
        let d = g.dim() as f64;
        let s2 = g.sigma2;
        let (ai, wi) = (g.amp_i, g.width_i);
        let mean_q = src.q0 + s2 * src.trace_q2;
        let value = match *self {
            RhsKernel::Amp => 2.0 * ai * mean_q,
            RhsKernel::Width => {
                let uq1: f64 = g.u.iter().zip(&src.q1).map(|(a, b)| a * b).sum();
                let moment = g.u2 * mean_q
                    + d * s2 * src.q0
                    + (d + 2.0) * s2 * s2 * src.trace_q2
                    + 2.0 * s2 * uq1;
                -2.0 * wi * ai * ai * moment
            }
            RhsKernel::Center(l) => 2.0 * wi * wi * ai * ai * (g.u[l] * mean_q + s2 * src.q1[l]),
        };
        value * src.amp2 * g.base
    }
}

/// The `K(K+1)/2` metric kernels and `K` right-hand-side kernels of a
/// Gaussian mixture in `d` dimensions, `K = d + 2`.
#[derive(Debug, Clone)]
pub struct KernelTable {
    dim: usize,
    metric: Vec<MetricKernel>,
    rhs: Vec<RhsKernel>,
}

impl KernelTable {
    pub fn gaussian(dim: usize) -> Self {
        let k = dim + 2;
        let mut metric = Vec::with_capacity(k * (k + 1) / 2);
        for row in 0..k {
            for col in 0..=row {
                metric.push(Self::classify(row, col));
            }
        }
        let rhs = (0..k)
            .map(|slot| match slot {
                AMP => RhsKernel::Amp,
                WIDTH => RhsKernel::Width,
                c => RhsKernel::Center(c - CENTER),
            })
            .collect();
        Self { dim, metric, rhs }
    }

    /// Kernel table for `family`; only Gaussian mixtures have closed forms.
    pub fn for_family(family: &dyn Ansatz) -> Result<Self> {
        if family.name() != "gaussian_mixture" {
            return Err(RonsError::UnsupportedFamily(family.name()));
        }
        Ok(Self::gaussian(family.dim()))
    }

    fn classify(row: usize, col: usize) -> MetricKernel {
        match (row, col) {
            (AMP, AMP) => MetricKernel::AmpAmp,
            (WIDTH, AMP) => MetricKernel::WidthAmp,
            (WIDTH, WIDTH) => MetricKernel::WidthWidth,
            (r, AMP) => MetricKernel::CenterAmp(r - CENTER),
            (r, WIDTH) => MetricKernel::CenterWidth(r - CENTER),
            (r, c) => MetricKernel::CenterCenter(r - CENTER, c - CENTER),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Parameters per mode `K`.
    pub fn per_mode(&self) -> usize {
        self.dim + 2
    }

    pub fn metric_kernels(&self) -> &[MetricKernel] {
        &self.metric
    }

    pub fn rhs_kernels(&self) -> &[RhsKernel] {
        &self.rhs
    }

    /// Total number of kernels, `K(K+3)/2`.
    pub fn len(&self) -> usize {
        self.metric.len() + self.rhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lower_index(row: usize, col: usize) -> usize {
        row * (row + 1) / 2 + col
    }

    /// Metric kernel for block entry `(row, col)` and whether the mode
    /// arguments must be swapped to evaluate it.
    pub fn metric_entry(&self, row: usize, col: usize) -> (usize, bool) {
        if row >= col {
            (Self::lower_index(row, col), false)
        } else {
            (Self::lower_index(col, row), true)
        }
    }

    fn check(&self, q: &ParameterState) -> Result<Layout> {
        let layout = q.layout();
        if layout.per_mode() != self.per_mode() || layout.modes() == 0 {
            return Err(RonsError::layout(
                format!("Gaussian mixture modes with {} parameters", self.per_mode()),
                format!("{:?}", layout),
            ));
        }
        for i in 0..layout.modes() {
            let w = q.get(i, WIDTH);
            if w == 0.0 || !w.is_finite() {
                return Err(RonsError::SingularParameter {
                    mode: i,
                    reason: "width w_i must be finite and non-zero",
                });
            }
        }
        Ok(layout)
    }

    /// Fills the `K×K` block pairing row mode `i` with column mode `j`.
    fn fill_block(&self, mi: &[f64], mj: &[f64], out: &mut [f64], used: &mut [bool]) {
        let k = self.per_mode();
        let direct = PairGeometry::new(mi, mj);
        let swapped = PairGeometry::new(mj, mi);
        for row in 0..k {
            for col in 0..k {
                let (idx, swap) = self.metric_entry(row, col);
                used[idx] = true;
                let g = if swap { &swapped } else { &direct };
                out[row * k + col] = self.metric[idx].eval(g);
            }
        }
    }

    fn metric_impl(&self, q: &ParameterState, used: &mut [bool]) -> Result<DMatrix<f64>> {
        let layout = self.check(q)?;
        let (r, k) = (layout.modes(), layout.per_mode());
        let n = layout.len();
        let mut m = DMatrix::zeros(n, n);
        let mut block = vec![0.0; k * k];
        for i in 0..r {
            for j in 0..=i {
                self.fill_block(q.mode(i), q.mode(j), &mut block, used);
                for a in 0..k {
                    for b in 0..k {
                        let (row, col) = (i * k + a, j * k + b);
                        if i == j && b > a {
                            continue;
                        }
                        m[(row, col)] = block[a * k + b];
                        m[(col, row)] = block[a * k + b];
                    }
                }
            }
        }
        Ok(m)
    }

    fn rhs_impl(
        &self,
        pde: &FokkerPlanck,
        q: &ParameterState,
        t: f64,
        used: &mut [bool],
    ) -> Result<DVector<f64>> {
        let layout = self.check(q)?;
        if pde.dim != self.dim {
            return Err(RonsError::Dimension {
                expected: self.dim,
                got: pde.dim,
            });
        }
        let (r, k) = (layout.modes(), layout.per_mode());
        let mut f = DVector::zeros(layout.len());
        for i in 0..r {
            for j in 0..r {
                let g = PairGeometry::new(q.mode(i), q.mode(j));
                let src = SourceTerms::new(pde, &g, t);
                for (slot, kernel) in self.rhs.iter().enumerate() {
                    used[slot] = true;
                    f[i * k + slot] += kernel.eval_pair(&g, &src);
                }
            }
        }
        Ok(f)
    }

    /// Metric tensor `M_jk = ⟨∂û/∂q_j, ∂û/∂q_k⟩` by block substitution.
    pub fn assemble_metric(&self, q: &ParameterState) -> Result<DMatrix<f64>> {
        let mut used = vec![false; self.metric.len()];
        self.metric_impl(q, &mut used)
    }

    /// Right-hand side `f_j = ⟨∂û/∂q_j, F(û)⟩` by block substitution.
    pub fn assemble_rhs(
        &self,
        pde: &FokkerPlanck,
        q: &ParameterState,
        t: f64,
    ) -> Result<DVector<f64>> {
        let mut used = vec![false; self.rhs.len()];
        self.rhs_impl(pde, q, t, &mut used)
    }

    pub fn assemble(&self, pde: &FokkerPlanck, q: &ParameterState, t: f64) -> Result<DenseSystem> {
        Ok(DenseSystem {
            m: self.assemble_metric(q)?,
            f: self.assemble_rhs(pde, q, t)?,
            t,
        })
    }

    /// Assembles `(M, f)` while recording which distinct kernels were invoked.
    pub fn assemble_with_usage(
        &self,
        pde: &FokkerPlanck,
        q: &ParameterState,
        t: f64,
    ) -> Result<(DenseSystem, KernelUsage)> {
        let mut metric_used = vec![false; self.metric.len()];
        let mut rhs_used = vec![false; self.rhs.len()];
        let m = self.metric_impl(q, &mut metric_used)?;
        let f = self.rhs_impl(pde, q, t, &mut rhs_used)?;
        let usage = KernelUsage {
            metric: metric_used.iter().filter(|u| **u).count(),
            rhs: rhs_used.iter().filter(|u| **u).count(),
        };
        Ok((DenseSystem { m, f, t }, usage))
    }

    /// Evaluates metric kernel `index` on an ordered pair of mode blocks.
    pub fn eval_metric_kernel(&self, index: usize, mode_i: &[f64], mode_j: &[f64]) -> f64 {
        self.metric[index].eval(&PairGeometry::new(mode_i, mode_j))
    }

    /// Evaluates right-hand-side kernel `slot` for test mode `i` against a
    /// whole mixture.
    pub fn eval_rhs_kernel(
        &self,
        slot: usize,
        pde: &FokkerPlanck,
        mode_i: &[f64],
        q: &ParameterState,
        t: f64,
    ) -> f64 {
        (0..q.layout().modes())
            .map(|j| {
                let g = PairGeometry::new(mode_i, q.mode(j));
                let src = SourceTerms::new(pde, &g, t);
                self.rhs[slot].eval_pair(&g, &src)
            })
            .sum()
    }
}

/// Number of distinct kernels invoked by one assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelUsage {
    pub metric: usize,
    pub rhs: usize,
}

impl KernelUsage {
    pub fn total(&self) -> usize {
        self.metric + self.rhs
    }
}

/// Dense RONS system `M q̇ = f` assembled at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSystem {
    pub m: DMatrix<f64>,
    pub f: DVector<f64>,
    pub t: f64,
}

/// Metric tensor of a Gaussian-mixture state.
pub fn assemble_metric_symbolic(q: &ParameterState) -> Result<DMatrix<f64>> {
    let dim = gaussian_dim(q)?;
    KernelTable::gaussian(dim).assemble_metric(q)
}

/// Fokker–Planck right-hand side of a Gaussian-mixture state at time `t`.
pub fn assemble_rhs_symbolic(pde: &FokkerPlanck, q: &ParameterState, t: f64) -> Result<DVector<f64>> {
    KernelTable::gaussian(pde.dim).assemble_rhs(pde, q, t)
}

fn gaussian_dim(q: &ParameterState) -> Result<usize> {
    let k = q.layout().per_mode();
    if k < 3 {
        return Err(RonsError::layout("at least 3 parameters per mode", k));
    }
    Ok(k - 2)
}

/// Total mass `I₁(q) = ∫ û dx = Σ A_i² (π/w_i²)^{d/2}` and its gradient.
pub fn conserved_probability(q: &ParameterState) -> Result<(f64, DVector<f64>)> {
    let dim = gaussian_dim(q)?;
    let family = GaussianMixture::new(dim);
    let layout = family.layout_for(q.values())?;
    let half_d = dim as f64 / 2.0;
    let mut total = 0.0;
    let mut grad = DVector::zeros(layout.len());
    for i in 0..layout.modes() {
        let (a, w) = (q.get(i, AMP), q.get(i, WIDTH));
        if w == 0.0 || !w.is_finite() {
            return Err(RonsError::SingularParameter {
                mode: i,
                reason: "width w_i must be finite and non-zero",
            });
        }
        let mass = (std::f64::consts::PI / (w * w)).powf(half_d);
        total += a * a * mass;
        grad[layout.index(i, AMP)] = 2.0 * a * mass;
        grad[layout.index(i, WIDTH)] = -(dim as f64) / w * a * a * mass;
    }
    Ok((total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{gaussian_metric_quadrature, gaussian_rhs_quadrature};
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn table_has_theorem_count() {
        for d in 1..=8 {
            let t = KernelTable::gaussian(d);
            let k = d + 2;
            assert_eq!(t.metric_kernels().len(), k * (k + 1) / 2);
            assert_eq!(t.rhs_kernels().len(), k);
            assert_eq!(t.len(), k * (k + 3) / 2);
        }
        assert_eq!(KernelTable::gaussian(8).len(), 65);
    }

    #[test]
    fn swapped_kernel_reproduces_transposed_entry() {
        let table = KernelTable::gaussian(2);
        let mi = [0.8, 1.2, 0.3, -0.1];
        let mj = [1.1, 0.7, -0.2, 0.4];
        let q = ParameterState::from_modes(0.0, &[mi.to_vec(), mj.to_vec()]).unwrap();
        let m = table.assemble_metric(&q).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let (idx, swap) = table.metric_entry(a, b);
                // lower block: rows belong to mode j, columns to mode i
                let v = if swap {
                    table.eval_metric_kernel(idx, &mi, &mj)
                } else {
                    table.eval_metric_kernel(idx, &mj, &mi)
                };
                assert_eq!(v, m[(4 + a, b)]);
                assert_eq!(m[(a, 4 + b)], m[(4 + b, a)]);
            }
        }
    }

    #[test]
    fn metric_is_exactly_symmetric() {
        let q = ParameterState::from_modes(
            0.0,
            &[
                vec![0.8, 1.2, 0.3, -0.1, 0.2],
                vec![1.1, 0.7, -0.2, 0.4, 0.0],
                vec![0.5, 0.9, 0.6, 0.1, -0.3],
            ],
        )
        .unwrap();
        let m = assemble_metric_symbolic(&q).unwrap();
        assert_eq!(m, m.transpose());
    }

    #[test]
    fn zero_amplitudes_give_zero_rhs() {
        let pde = FokkerPlanck::harmonic_trap(2);
        let q = ParameterState::from_modes(0.0, &[vec![0.0, 1.0, 0.2, 0.1], vec![0.0, 2.0, -0.4, 0.3]])
            .unwrap();
        let f = assemble_rhs_symbolic(&pde, &q, 0.3).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_width_is_rejected() {
        let q = ParameterState::from_modes(0.0, &[vec![1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(assemble_metric_symbolic(&q).unwrap_err().kind(), "singular_parameter");
        assert_eq!(conserved_probability(&q).unwrap_err().kind(), "singular_parameter");
    }

    #[test]
    fn non_gaussian_family_is_unsupported() {
        let tanh = crate::ansatz::TanhNetwork::new(1.0).unwrap();
        assert_eq!(KernelTable::for_family(&tanh).unwrap_err().kind(), "unsupported_family");
        assert!(KernelTable::for_family(&GaussianMixture::new(3)).is_ok());
    }

    #[test]
    fn unit_mass_gaussian() {
        let mut m = vec![PI.powi(-2), 1.0];
        m.extend(std::iter::repeat_n(0.3, 8));
        let q = ParameterState::from_modes(0.0, &[m]).unwrap();
        let (i1, grad) = conserved_probability(&q).unwrap();
        assert!((i1 - 1.0).abs() < 1e-15);
        assert!(grad.iter().skip(2).all(|g| *g == 0.0));
    }

    #[test]
    fn probability_gradient_matches_differences() {
        let q = ParameterState::from_modes(
            0.0,
            &[vec![0.7, 1.3, 0.1, 0.2, 0.3], vec![-0.4, 0.8, 0.0, -0.5, 0.9]],
        )
        .unwrap();
        let (_, grad) = conserved_probability(&q).unwrap();
        let h = 1e-6;
        for j in 0..q.values().len() {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp.values_mut()[j] += h;
            qm.values_mut()[j] -= h;
            let fd = (conserved_probability(&qp).unwrap().0 - conserved_probability(&qm).unwrap().0)
                / (2.0 * h);
            let scale = grad[j].abs().max(1e-8);
            assert!((fd - grad[j]).abs() / scale < 1e-6, "entry {j}: {fd} vs {}", grad[j]);
        }
    }

    fn split_initial_state(modes: usize) -> ParameterState {
        let d = 8;
        let amp = ((2.0 * PI * 0.1).powi(-4) / modes as f64).sqrt();
        let m: Vec<Vec<f64>> = (0..modes)
            .map(|_| {
                let mut v = vec![amp, 5f64.sqrt()];
                v.extend((0..d).map(|i| 0.9 + 2.1 * i as f64 / (d - 1) as f64));
                v
            })
            .collect();
        ParameterState::from_modes(0.0, &m).unwrap()
    }

    fn random_state(rng: &mut ChaCha8Rng, modes: usize, d: usize) -> ParameterState {
        let m: Vec<Vec<f64>> = (0..modes)
            .map(|_| {
                let mut v = vec![rng.random_range(-1.5..1.5), rng.random_range(0.5..1.5)];
                v.extend((0..d).map(|_| rng.random_range(-1.0..1.0)));
                v
            })
            .collect();
        ParameterState::from_modes(0.0, &m).unwrap()
    }

    fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn single_mode_entries_match_hermite_quadrature() {
        let q = ParameterState::from_modes(0.0, &[vec![1.0, 1.0, 0.0]]).unwrap();
        let m = assemble_metric_symbolic(&q).unwrap();
        let oracle = gaussian_metric_quadrature(&q, 64).unwrap();
        // entries that vanish by symmetry are compared on the matrix scale
        let floor = 1e-6 * oracle.amax();
        for (a, b) in m.iter().zip(oracle.iter()) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(floor), "{a} vs {b}");
        }
    }

    #[test]
    fn duplicate_modes_make_the_metric_rank_deficient() {
        let mode = vec![0.8, 1.1, 0.3, -0.2];
        let q = ParameterState::from_modes(0.0, &[mode.clone(), mode]).unwrap();
        let s = assemble_metric_symbolic(&q).unwrap().singular_values();
        assert!(s.min() < 1e-12 * s.max());
    }

    #[test]
    fn three_mode_metric_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..5 {
            let q = random_state(&mut rng, 3, 2);
            let m = assemble_metric_symbolic(&q).unwrap();
            let oracle = gaussian_metric_quadrature(&q, 10).unwrap();
            assert!(rel_frobenius(&m, &oracle) < 1e-8);
        }
    }

    #[test]
    fn rhs_matches_quadrature_in_one_and_two_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for d in [1, 2] {
            let pde = FokkerPlanck::harmonic_trap(d);
            for t in [0.0, 0.37] {
                let q = random_state(&mut rng, 2, d);
                let f = assemble_rhs_symbolic(&pde, &q, t).unwrap();
                let oracle = gaussian_rhs_quadrature(&pde, &q, t, 10).unwrap();
                assert!((&f - &oracle).norm() / oracle.norm() < 1e-8);
            }
        }
        // single mode with trap-style parameters
        let pde = FokkerPlanck::harmonic_trap(1);
        let q = ParameterState::from_modes(0.0, &[vec![(2.0 * PI * 0.1).powf(-0.25), 5f64.sqrt(), 0.9]]).unwrap();
        let f = assemble_rhs_symbolic(&pde, &q, 0.0).unwrap();
        let oracle = gaussian_rhs_quadrature(&pde, &q, 0.0, 64).unwrap();
        let floor = 1e-6 * oracle.amax();
        for (a, b) in f.iter().zip(oracle.iter()) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(floor), "{a} vs {b}");
        }
    }

    #[test]
    fn eight_dimensional_rhs_matches_quadrature() {
        let pde = FokkerPlanck::harmonic_trap(8);
        let mut q = split_initial_state(2);
        // separate the modes so every kernel argument is generic
        for (i, v) in q.values_mut().iter_mut().enumerate() {
            *v += 0.01 * ((i * 7 % 5) as f64 - 2.0);
        }
        let f = assemble_rhs_symbolic(&pde, &q, 0.0).unwrap();
        let oracle = gaussian_rhs_quadrature(&pde, &q, 0.0, 3).unwrap();
        assert!((&f - &oracle).norm() / oracle.norm() < 1e-6);
        let m = assemble_metric_symbolic(&q).unwrap();
        let m_oracle = gaussian_metric_quadrature(&q, 3).unwrap();
        assert!(rel_frobenius(&m, &m_oracle) < 1e-8);
    }

    #[test]
    fn split_initial_condition_has_unit_mass() {
        for r in [1, 2, 30] {
            let (i1, _) = conserved_probability(&split_initial_state(r)).unwrap();
            assert!((i1 - 1.0).abs() < 1e-12, "r={r}: {i1}");
        }
    }

    #[test]
    fn usage_counts_every_kernel_once_per_table() {
        let pde = FokkerPlanck::harmonic_trap(8);
        let table = KernelTable::gaussian(8);
        for r in [2, 30] {
            let (_, usage) = table.assemble_with_usage(&pde, &split_initial_state(r), 0.0).unwrap();
            assert_eq!(usage.total(), 65);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn metric_is_positive_semidefinite(seed in any::<u64>(), modes in 1usize..4, d in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random_state(&mut rng, modes, d);
            let m = assemble_metric_symbolic(&q).unwrap();
            let norm2 = m.singular_values().max();
            for _ in 0..100 {
                let x = DVector::from_fn(m.nrows(), |_, _| rng.random_range(-1.0..1.0));
                prop_assert!((&m * &x).dot(&x) >= -1e-10 * norm2 * x.norm_squared());
            }
        }

        #[test]
        fn kernels_match_pair_quadrature(seed in any::<u64>(), d in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random_state(&mut rng, 2, d);
            let table = KernelTable::gaussian(d);
            let oracle = crate::oracles::quadrature::pair_metric_quadrature(q.mode(0), q.mode(1), 6);
            let k = d + 2;
            for a in 0..k {
                for b in 0..=a {
                    let (idx, _) = table.metric_entry(a, b);
                    let v = table.eval_metric_kernel(idx, q.mode(0), q.mode(1));
                    let scale = oracle.amax();
                    prop_assert!((v - oracle[(a, b)]).abs() <= 1e-10 * scale);
                }
            }
        }
    }

    #[test]
    fn rhs_depends_on_time_only_through_forcing() {
        let pde = FokkerPlanck::harmonic_trap(2);
        let q = ParameterState::from_modes(0.0, &[vec![0.9, 1.1, 0.5, 0.7], vec![0.6, 1.4, 1.0, 0.2]])
            .unwrap();
        // sin(π t) repeats with period 2
        let f1 = assemble_rhs_symbolic(&pde, &q, 0.25).unwrap();
        let f2 = assemble_rhs_symbolic(&pde, &q, 2.25).unwrap();
        let f3 = assemble_rhs_symbolic(&pde, &q, 0.75).unwrap();
        let rel = (&f1 - &f2).norm() / f1.norm();
        assert!(rel < 1e-14);
        // a(0.25) = a(0.75)
        assert!((&f1 - &f3).norm() / f1.norm() < 1e-14);
        assert!((&f1 - assemble_rhs_symbolic(&pde, &q, 0.5).unwrap()).norm() > 1e-6);
    }
}

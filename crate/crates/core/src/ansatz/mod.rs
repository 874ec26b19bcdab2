//! Shape-morphing ansatz families.
//!
//! An ansatz is a map `(x, q) -> û(x, q)` that is nonlinear in the parameter
//! vector `q`. Every family here is a sum of `r` modes with `K` parameters per
//! mode, stored flat as `(α₁, β₁, …, α_r, β_r)` where `α_i` is the amplitude
//! slot and `β_i` the shape slots of mode `i`.
//!
//! Trait methods assume validated inputs so the assembly loops stay free of
//! per-point checks; call [`Ansatz::validate`] (or use the checked free
//! functions) at API boundaries.

mod galerkin;
mod gaussian;
mod tanh;

pub use galerkin::FourierGalerkin;
pub use gaussian::{GaussianMixture, MixtureDerivatives};
pub use tanh::{TanhNetwork, TANH_SLOTS};

use crate::error::{Result, RonsError};

/// Mode count and per-mode parameter count of a flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    modes: usize,
    per_mode: usize,
}

impl Layout {
    pub fn new(modes: usize, per_mode: usize) -> Self {
        Self { modes, per_mode }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn per_mode(&self) -> usize {
        self.per_mode
    }

    /// Total parameter count `n = r·K`.
    pub fn len(&self) -> usize {
        self.modes * self.per_mode
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of `slot` within `mode` (both zero-based).
    pub fn index(&self, mode: usize, slot: usize) -> usize {
        debug_assert!(mode < self.modes && slot < self.per_mode);
        mode * self.per_mode + slot
    }

    /// Inverse of [`Layout::index`].
    pub fn locate(&self, index: usize) -> (usize, usize) {
        (index / self.per_mode, index % self.per_mode)
    }

    pub fn check(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(RonsError::layout(
                format!("{} values ({} modes x {})", self.len(), self.modes, self.per_mode),
                format!("{} values", values.len()),
            ));
        }
        Ok(())
    }
}

/// Parameter vector `q(t)` together with its mode layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    pub t: f64,
    layout: Layout,
    values: Vec<f64>,
}

impl ParameterState {
    pub fn new(t: f64, layout: Layout, values: Vec<f64>) -> Result<Self> {
        layout.check(&values)?;
        Ok(Self { t, layout, values })
    }

    pub fn zeros(layout: Layout) -> Self {
        Self {
            t: 0.0,
            layout,
            values: vec![0.0; layout.len()],
        }
    }

    /// Builds a state from per-mode parameter blocks.
    pub fn from_modes(t: f64, modes: &[Vec<f64>]) -> Result<Self> {
        let per_mode = modes.first().map_or(0, Vec::len);
        if let Some(bad) = modes.iter().find(|m| m.len() != per_mode) {
            return Err(RonsError::layout(
                format!("{per_mode} parameters per mode"),
                format!("a mode with {}", bad.len()),
            ));
        }
        let values = modes.iter().flatten().copied().collect();
        Ok(Self {
            t,
            layout: Layout::new(modes.len(), per_mode),
            values,
        })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mode(&self, mode: usize) -> &[f64] {
        let k = self.layout.per_mode;
        &self.values[mode * k..(mode + 1) * k]
    }

    pub fn get(&self, mode: usize, slot: usize) -> f64 {
        self.values[self.layout.index(mode, slot)]
    }

    pub fn set(&mut self, mode: usize, slot: usize, value: f64) {
        let i = self.layout.index(mode, slot);
        self.values[i] = value;
    }
}

/// Spatial domain of an ansatz family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// All of `ℝᵈ`.
    Unbounded { dim: usize },
    /// The periodic interval `[-half_width, half_width)`.
    Periodic { half_width: f64 },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match *self {
            Domain::Unbounded { dim } => dim,
            Domain::Periodic { .. } => 1,
        }
    }

    /// Lebesgue measure of the domain, if finite.
    pub fn size(&self) -> Option<f64> {
        match *self {
            Domain::Unbounded { .. } => None,
            Domain::Periodic { half_width } => Some(2.0 * half_width),
        }
    }

    /// Maps a point into the canonical representative of the domain.
    /// Periodic coordinates are wrapped into `[-ℓ, ℓ)`; unbounded points are
    /// returned unchanged.
    pub fn wrap(&self, x: &mut [f64]) {
        if let Domain::Periodic { half_width } = *self {
            let period = 2.0 * half_width;
            for xi in x.iter_mut() {
                *xi = (*xi + half_width).rem_euclid(period) - half_width;
            }
        }
    }
}

/// A shape-morphing family `û(x, q) = Σ_i α_i φ(x, β_i)`.
pub trait Ansatz: Sync {
    fn name(&self) -> &'static str;

    /// Spatial dimension `d`.
    fn dim(&self) -> usize;

    /// Parameters per mode `K`.
    fn per_mode(&self) -> usize;

    fn domain(&self) -> Domain;

    /// `û(x, q)`.
    fn value(&self, x: &[f64], q: &[f64]) -> f64;

    /// Writes `∂û/∂q_j (x, q)` into `out` (length `q.len()`).
    fn jacobian_into(&self, x: &[f64], q: &[f64], out: &mut [f64]);

    fn jacobian(&self, x: &[f64], q: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; q.len()];
        self.jacobian_into(x, q, &mut out);
        out
    }

    fn layout_for(&self, q: &[f64]) -> Result<Layout> {
        let k = self.per_mode();
        if q.is_empty() || !q.len().is_multiple_of(k) {
            return Err(RonsError::layout(
                format!("a positive multiple of {k} parameters ({})", self.name()),
                format!("{} parameters", q.len()),
            ));
        }
        Ok(Layout::new(q.len() / k, k))
    }

    /// Checks the point dimension and the parameter layout.
    fn validate(&self, x: &[f64], q: &[f64]) -> Result<Layout> {
        if x.len() != self.dim() {
            return Err(RonsError::layout(
                format!("a point in {} dimensions", self.dim()),
                format!("a point in {} dimensions", x.len()),
            ));
        }
        self.layout_for(q)
    }
}

fn check_state<A: Ansatz + ?Sized>(family: &A, x: &[f64], q: &ParameterState) -> Result<()> {
    let layout = family.validate(x, q.values())?;
    if layout != q.layout() {
        return Err(RonsError::layout(
            format!("{:?}", layout),
            format!("{:?}", q.layout()),
        ));
    }
    Ok(())
}

/// Evaluates `Σ A_i² exp(-w_i²|x - c_i|²)` with layout checks.
pub fn eval_gaussian_mixture(x: &[f64], q: &ParameterState) -> Result<f64> {
    let family = GaussianMixture::new(x.len());
    check_state(&family, x, q)?;
    Ok(family.value(x, q.values()))
}

/// Evaluates `Σ A_i tanh(w_i sin(πx/ℓ + c_i) + d_i)` with layout checks.
pub fn eval_tanh_network(x: f64, half_width: f64, q: &ParameterState) -> Result<f64> {
    let family = TanhNetwork::new(half_width)?;
    check_state(&family, &[x], q)?;
    Ok(family.value(&[x], q.values()))
}

/// Analytic parameter Jacobian `∂û/∂q_j (x, q)` with layout checks.
pub fn param_jacobian<A: Ansatz + ?Sized>(
    family: &A,
    x: &[f64],
    q: &ParameterState,
) -> Result<Vec<f64>> {
    check_state(family, x, q)?;
    Ok(family.jacobian(x, q.values()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_index_round_trips() {
        let layout = Layout::new(7, 10);
        for mode in 0..7 {
            for slot in 0..10 {
                let i = layout.index(mode, slot);
                assert_eq!(i, mode * 10 + slot);
                assert_eq!(layout.locate(i), (mode, slot));
            }
        }
    }

    #[test]
    fn state_rejects_wrong_length() {
        let err = ParameterState::new(0.0, Layout::new(2, 4), vec![0.0; 7]).unwrap_err();
        assert_eq!(err.kind(), "layout");
    }

    #[test]
    fn from_modes_flattens_in_order() {
        let q = ParameterState::from_modes(0.5, &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(q.values(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(q.get(1, 0), 3.0);
        assert_eq!(q.mode(1), &[3.0, 4.0]);
        assert!(ParameterState::from_modes(0.0, &[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn periodic_wrap_is_half_open() {
        let d = Domain::Periodic { half_width: 10.0 };
        let mut x = [10.0];
        d.wrap(&mut x);
        assert_eq!(x[0], -10.0);
        let mut y = [-31.0];
        d.wrap(&mut y);
        assert!((y[0] - 9.0).abs() < 1e-12);
        assert_eq!(d.size(), Some(20.0));
    }

    #[test]
    fn mixture_dimension_mismatch_is_layout_error() {
        let q = ParameterState::from_modes(0.0, &[vec![1.0, 1.0, 0.0, 0.0]]).unwrap();
        // K = 4 implies d = 2, a 3-D point is rejected
        let err = eval_gaussian_mixture(&[0.0, 0.0, 0.0], &q).unwrap_err();
        assert_eq!(err.kind(), "layout");
    }
}

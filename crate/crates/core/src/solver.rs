//! Solves for `q̇` in every RONS regime.
//!
//! All constrained solves share one Lagrange elimination: given a symmetric
//! (pseudo)inverse `S` of the system operator, `C = Gᵀ S G`, `b = Gᵀ S g`,
//! `Cλ = b` and `q̇ = S(g − Gλ)`, where the columns of `G` are the conserved
//! quantity gradients. The regimes differ only in `S`:
//!
//! | regime | operator | `S` |
//! |---|---|---|
//! | constrained RONS | `M` | SVD pseudoinverse |
//! | regularized RONS | `M + αI` | Cholesky, SVD fallback |
//! | (regularized) C-RONS | `M̃ᵀM̃ + αI` | filter factors from the SVD of `M̃` |
//!
//! The C-RONS path never forms `M̃ᵀM̃`.

use faer::linalg::solvers::{Llt, Solve};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RonsError};

/// Default relative SVD truncation threshold.
pub const DEFAULT_TRUNCATION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizationMode {
    None,
    Tikhonov,
}

/// Tikhonov penalty `ΓᵀΓ = αI` and SVD truncation threshold `τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationConfig {
    pub mode: RegularizationMode,
    pub alpha: f64,
    pub truncation: f64,
}

impl RegularizationConfig {
    pub fn none() -> Self {
        Self {
            mode: RegularizationMode::None,
            alpha: 0.0,
            truncation: DEFAULT_TRUNCATION,
        }
    }

    /// `α = 0` yields the unregularized configuration.
    pub fn tikhonov(alpha: f64) -> Result<Self> {
        let cfg = Self {
            mode: if alpha == 0.0 {
                RegularizationMode::None
            } else {
                RegularizationMode::Tikhonov
            },
            alpha,
            truncation: DEFAULT_TRUNCATION,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(RonsError::invalid("alpha", format!("must be finite and >= 0, got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.truncation) {
            return Err(RonsError::invalid(
                "truncation",
                format!("must lie in [0, 1), got {}", self.truncation),
            ));
        }
        match (self.mode, self.alpha == 0.0) {
            (RegularizationMode::None, true) | (RegularizationMode::Tikhonov, false) => Ok(()),
            _ => Err(RonsError::invalid("alpha", "mode `none` requires alpha = 0 and vice versa")),
        }
    }
}

/// Lagrange multipliers and diagnostics of the constraint solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeSolveReport {
    pub multipliers: Vec<f64>,
    /// Eigenvalue ratio `λ_max/λ_min` of the constraint matrix.
    pub constraint_condition: f64,
    pub constraint_min_eigenvalue: f64,
    /// `‖Cλ − b‖`.
    pub residual: f64,
}

impl LagrangeSolveReport {
    fn unconstrained() -> Self {
        Self {
            multipliers: Vec::new(),
            constraint_condition: 1.0,
            constraint_min_eigenvalue: f64::INFINITY,
            residual: 0.0,
        }
    }
}

fn check_finite_matrix(a: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(RonsError::NonFinite(what))
    }
}

fn check_finite_vector(a: &DVector<f64>, what: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(RonsError::NonFinite(what))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if (0.0..1.0).contains(&tau) {
        Ok(())
    } else {
        Err(RonsError::invalid("truncation", format!("must lie in [0, 1), got {tau}")))
    }
}

/// Thin SVD `A = U diag(s) Vᵀ` with `k = min(p, n)` columns.
///
/// Computed with faer: nalgebra's bidiagonal SVD returns inaccurate singular
/// vectors for rank-deficient rectangular input.
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

pub fn thin_svd(a: &DMatrix<f64>) -> Result<ThinSvd> {
    let (p, n) = a.shape();
    let k = p.min(n);
    if k == 0 {
        return Ok(ThinSvd {
            u: DMatrix::zeros(p, 0),
            s: DVector::zeros(0),
            v_t: DMatrix::zeros(0, n),
        });
    }
    let svd = faer::MatRef::from_column_major_slice(a.as_slice(), p, n)
        .thin_svd()
        .map_err(|_| RonsError::NonFinite("singular value decomposition"))?;
    let (u, s, v) = (svd.U(), svd.S(), svd.V());
    Ok(ThinSvd {
        u: DMatrix::from_fn(p, k, |i, j| u[(i, j)]),
        s: DVector::from_fn(k, |i, _| s[i]),
        v_t: DMatrix::from_fn(k, n, |i, j| v[(j, i)]),
    })
}

/// `A⁺` from the SVD, zeroing singular values below `τ·σ_max`.
pub fn pseudo_inverse(a: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    check_tau(tau)?;
    check_finite_matrix(a, "pseudoinverse input")?;
    let ThinSvd { u, s, v_t } = thin_svd(a)?;
    let smax = s.max();
    let inv = s.map(|s| if s > tau * smax && s > 0.0 { 1.0 / s } else { 0.0 });
    Ok(v_t.transpose() * DMatrix::from_diagonal(&inv) * u.transpose())
}

/// `A⁺b`: the minimum-norm least-squares solution.
pub fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    check_tau(tau)?;
    check_finite_matrix(a, "pseudoinverse input")?;
    check_finite_vector(b, "right-hand side")?;
    if b.len() != a.nrows() {
        return Err(RonsError::Dimension {
            expected: a.nrows(),
            got: b.len(),
        });
    }
    let ThinSvd { u, s, v_t } = thin_svd(a)?;
    let smax = s.max();
    let mut c = u.transpose() * b;
    for (ci, s) in c.iter_mut().zip(s.iter()) {
        *ci = if *s > tau * smax && *s > 0.0 { *ci / s } else { 0.0 };
    }
    Ok(v_t.transpose() * c)
}

/// `(κ, σ_max, σ_min)` over the numerically nonzero singular values.
pub fn condition_diagnostics(a: &DMatrix<f64>) -> Result<(f64, f64, f64)> {
    check_finite_matrix(a, "condition estimate input")?;
    let s = thin_svd(a)?.s;
    let smax = s.max();
    if smax == 0.0 {
        return Err(RonsError::ZeroMatrix);
    }
    let cutoff = smax * f64::EPSILON * a.nrows().max(a.ncols()) as f64;
    let smin = s.iter().copied().filter(|v| *v > cutoff).fold(f64::INFINITY, f64::min);
    Ok((smax / smin, smax, smin))
}

/// `𝒥 = ½(q̇ᵀMq̇ − 2fᵀq̇ + ‖F(û)‖²)`.
pub fn cost_functional(m: &DMatrix<f64>, f: &DVector<f64>, qdot: &DVector<f64>, f_norm2: f64) -> f64 {
    0.5 * ((m * qdot).dot(qdot) - 2.0 * f.dot(qdot) + f_norm2)
}

/// Symmetric (pseudo)inverse of a system operator.
enum Inverse {
    Explicit(DMatrix<f64>),
    Cholesky(Llt<f64>),
    /// `V diag(d) Vᵀ + c (I − VVᵀ)`.
    Filtered { v: DMatrix<f64>, d: DVector<f64>, complement: f64 },
}

impl Inverse {
    fn apply(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Inverse::Explicit(p) => p * g,
            Inverse::Cholesky(ch) => {
                let mut out = g.clone();
                let (rows, cols) = out.shape();
                ch.solve_in_place(faer::MatMut::from_column_major_slice_mut(out.as_mut_slice(), rows, cols));
                out
            }
            Inverse::Filtered { v, d, complement } => {
                let vg = v.transpose() * g;
                let mut out = v * DMatrix::from_diagonal(d) * &vg;
                if *complement != 0.0 {
                    out += (g - v * vg) * *complement;
                }
                out
            }
        }
    }
}

fn gradient_matrix(grads: &[DVector<f64>], n: usize) -> Result<DMatrix<f64>> {
    for g in grads {
        if g.len() != n {
            return Err(RonsError::Dimension {
                expected: n,
                got: g.len(),
            });
        }
        check_finite_vector(g, "constraint gradient")?;
    }
    Ok(DMatrix::from_columns(grads))
}

/// Eliminates the multipliers given `S` and the solved unconstrained part
/// `S g`.
fn lagrange(
    inv: &Inverse,
    solved: DVector<f64>,
    grads: &[DVector<f64>],
) -> Result<(DVector<f64>, LagrangeSolveReport)> {
    if grads.is_empty() {
        return Ok((solved, LagrangeSolveReport::unconstrained()));
    }
    let g = gradient_matrix(grads, solved.len())?;
    let sg = inv.apply(&g);
    let c_raw = g.transpose() * &sg;
    let c = (&c_raw + c_raw.transpose()) * 0.5;
    let b = g.transpose() * &solved;
    let eig = SymmetricEigen::new(c.clone());
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if !(lmax > 0.0) || lmin <= 1e-10 * lmax {
        return Err(RonsError::DependentConstraints {
            ratio: if lmax > 0.0 { lmin / lmax } else { 0.0 },
        });
    }
    let lambda = match c.clone().cholesky() {
        Some(ch) => ch.solve(&b),
        None => {
            let inv_l = eig.eigenvalues.map(|l| 1.0 / l);
            &eig.eigenvectors * DMatrix::from_diagonal(&inv_l) * eig.eigenvectors.transpose() * &b
        }
    };
    let residual = (&c * &lambda - &b).norm();
    let qdot = solved - sg * &lambda;
    Ok((
        qdot,
        LagrangeSolveReport {
            multipliers: lambda.iter().copied().collect(),
            constraint_condition: lmax / lmin,
            constraint_min_eigenvalue: lmin,
            residual,
        },
    ))
}

fn check_square(m: &DMatrix<f64>, f: &DVector<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(RonsError::Dimension {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if f.len() != m.nrows() {
        return Err(RonsError::Dimension {
            expected: m.nrows(),
            got: f.len(),
        });
    }
    check_finite_matrix(m, "metric tensor")?;
    check_finite_vector(f, "right-hand side")
}

/// `Mq̇ = f − Σλ_k∇I_k` with `⟨∇I_k, q̇⟩ = 0`; singular `M` is handled by
/// the truncated pseudoinverse.
pub fn solve_constrained_rons(
    m: &DMatrix<f64>,
    f: &DVector<f64>,
    grads: &[DVector<f64>],
    tau: f64,
) -> Result<(DVector<f64>, LagrangeSolveReport)> {
    check_square(m, f)?;
    let inv = Inverse::Explicit(pseudo_inverse(m, tau)?);
    let solved = inv.apply(&DMatrix::from_column_slice(f.len(), 1, f.as_slice()));
    lagrange(&inv, solved.column(0).into_owned(), grads)
}

/// Dense solve of a symmetric positive semidefinite `Mq̇ = f` by Cholesky,
/// without truncation; falls back to the pseudoinverse when the factorization
/// breaks down.
pub fn solve_normal_equations(m: &DMatrix<f64>, f: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    check_square(m, f)?;
    let n = m.nrows();
    let mut x = f.clone();
    match faer::MatRef::from_column_major_slice(m.as_slice(), n, n).llt(faer::Side::Lower) {
        Ok(ch) => ch.solve_in_place(faer::MatMut::from_column_major_slice_mut(x.as_mut_slice(), n, 1)),
        Err(_) => return pinv_solve(m, f, tau),
    }
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        pinv_solve(m, f, tau)
    }
}

/// `(M + αI)q̇ = f − Σλ̂_k∇I_k` with `⟨∇I_k, q̇⟩ = 0`.
pub fn solve_regularized_rons(
    m: &DMatrix<f64>,
    f: &DVector<f64>,
    grads: &[DVector<f64>],
    reg: &RegularizationConfig,
) -> Result<(DVector<f64>, LagrangeSolveReport)> {
    reg.validate()?;
    if reg.mode == RegularizationMode::None {
        return solve_constrained_rons(m, f, grads, reg.truncation);
    }
    check_square(m, f)?;
    let n = m.nrows();
    let shifted = m + DMatrix::identity(n, n) * reg.alpha;
    let inv = match faer::MatRef::from_column_major_slice(shifted.as_slice(), n, n).llt(faer::Side::Lower) {
        Ok(ch) => Inverse::Cholesky(ch),
        Err(_) => Inverse::Explicit(pseudo_inverse(&shifted, reg.truncation)?),
    };
    let solved = inv.apply(&DMatrix::from_column_slice(n, 1, f.as_slice()));
    lagrange(&inv, solved.column(0).into_owned(), grads)
}

/// `(M̃ᵀM̃ + αI)q̇ = M̃ᵀf̃ − Σλ̃_k∇I_k` with `⟨∇I_k, q̇⟩ = 0`.
///
/// With `α = 0` and no constraints this is `M̃⁺f̃`.
pub fn solve_regularized_least_squares(
    mt: &DMatrix<f64>,
    ft: &DVector<f64>,
    grads: &[DVector<f64>],
    reg: &RegularizationConfig,
) -> Result<(DVector<f64>, LagrangeSolveReport)> {
    reg.validate()?;
    if ft.len() != mt.nrows() {
        return Err(RonsError::Dimension {
            expected: mt.nrows(),
            got: ft.len(),
        });
    }
    check_finite_matrix(mt, "collocation matrix")?;
    check_finite_vector(ft, "collocation right-hand side")?;
    let n = mt.ncols();
    let ThinSvd { u, s, v_t } = thin_svd(mt)?;
    let smax = s.max();
    let alpha = reg.alpha;
    let keep = |si: f64| alpha > 0.0 || (si > reg.truncation * smax && si > 0.0);
    // filter factors: s/(s²+α) on the data, 1/(s²+α) on the gradients
    let data_filter = s.map(|si| if keep(si) { si / (si * si + alpha) } else { 0.0 });
    let grad_filter = s.map(|si| if keep(si) { 1.0 / (si * si + alpha) } else { 0.0 });
    let v = v_t.transpose();
    let solved = &v * data_filter.component_mul(&(u.transpose() * ft));
    let complement = if alpha > 0.0 && v.ncols() < n { 1.0 / alpha } else { 0.0 };
    let inv = Inverse::Filtered {
        v,
        d: grad_filter,
        complement,
    };
    lagrange(&inv, solved, grads)
}

//! Collocation assembly: the rectangular system `M̃q̇ = f̃` whose rows enforce
//! the residual `R(x_i, q, q̇) = Σ_j ∂û/∂q_j(x_i) q̇_j − F(û)(x_i)` at Dirac
//! test functions, plus constraint rows and the Monte Carlo normal equations.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::ansatz::{Ansatz, Domain, ParameterState};
use crate::error::{Result, RonsError};
use crate::pde::PdeOperator;

/// Rows `0..N` are collocation rows; the trailing `constraint_rows` rows are
/// conserved-quantity gradients with zero right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSystem {
    /// Flat `N×d` point coordinates after wrapping into the domain.
    pub points: Vec<f64>,
    pub dim: usize,
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub constraint_rows: usize,
}

impl CollocationSystem {
    pub fn num_points(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// `M̃q̇ − f̃` over the collocation rows.
    pub fn residual(&self, qdot: &DVector<f64>) -> DVector<f64> {
        let n = self.num_points();
        self.matrix.rows(0, n) * qdot - self.rhs.rows(0, n)
    }
}

fn point_count(points: &[f64], dim: usize) -> Result<usize> {
    if !points.len().is_multiple_of(dim) {
        return Err(RonsError::layout(
            format!("a multiple of {dim} point coordinates"),
            points.len(),
        ));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(RonsError::NonFinite("collocation points"));
    }
    Ok(points.len() / dim)
}

/// Builds `M̃_ij = ∂û/∂q_j(x_i, q)` and `f̃_i = F(û)(x_i, t)`. Points on
/// periodic domains are wrapped; points on unbounded domains are used as is.
pub fn assemble_collocation<A, P>(
    family: &A,
    pde: &P,
    q: &ParameterState,
    points: &[f64],
) -> Result<CollocationSystem>
where
    A: Ansatz + ?Sized,
    P: PdeOperator<A> + ?Sized,
{
    let dim = family.dim();
    let layout = family.layout_for(q.values())?;
    if layout != q.layout() {
        return Err(RonsError::layout(format!("{:?}", layout), format!("{:?}", q.layout())));
    }
    let count = point_count(points, dim)?;
    if count == 0 {
        return Err(RonsError::EmptySamples);
    }
    let mut wrapped = points.to_vec();
    let domain = family.domain();
    if matches!(domain, Domain::Periodic { .. }) {
        domain.wrap(&mut wrapped);
    }
    let n = layout.len();
    let mut matrix = DMatrix::zeros(count, n);
    let mut rhs = DVector::zeros(count);
    let mut row = vec![0.0; n];
    for i in 0..count {
        let x = &wrapped[i * dim..(i + 1) * dim];
        family.jacobian_into(x, q.values(), &mut row);
        for (j, v) in row.iter().enumerate() {
            matrix[(i, j)] = *v;
        }
        rhs[i] = pde.rhs(family, x, q.t, q.values());
    }
    Ok(CollocationSystem {
        points: wrapped,
        dim,
        matrix,
        rhs,
        constraint_rows: 0,
    })
}

/// Appends the rows `weight·∇I_kᵀ` with zero right-hand side.
pub fn augment_constraints(
    sys: &CollocationSystem,
    grads: &[DVector<f64>],
    weight: f64,
) -> Result<CollocationSystem> {
    let (rows, n) = sys.matrix.shape();
    for g in grads {
        if g.len() != n {
            return Err(RonsError::Dimension {
                expected: n,
                got: g.len(),
            });
        }
    }
    if !(weight > 0.0) || !weight.is_finite() {
        return Err(RonsError::invalid("constraint_weight", format!("must be positive, got {weight}")));
    }
    let m = grads.len();
    let mut matrix = sys.matrix.clone().resize_vertically(rows + m, 0.0);
    for (k, g) in grads.iter().enumerate() {
        for j in 0..n {
            matrix[(rows + k, j)] = weight * g[j];
        }
    }
    let rhs = sys.rhs.clone().resize_vertically(rows + m, 0.0);
    Ok(CollocationSystem {
        points: sys.points.clone(),
        dim: sys.dim,
        matrix,
        rhs,
        constraint_rows: sys.constraint_rows + m,
    })
}

/// Monte Carlo normal equations `M̄ = (|D|/N)M̃ᵀM̃`, `f̄ = (|D|/N)M̃ᵀf̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSystem {
    pub samples: Vec<f64>,
    pub dim: usize,
    pub m_bar: DMatrix<f64>,
    pub f_bar: DVector<f64>,
    pub domain_size: f64,
}

impl MonteCarloSystem {
    /// Forms the normal equations from a collocation system over the same
    /// samples.
    pub fn from_collocation(sys: &CollocationSystem, domain_size: f64) -> Result<Self> {
        let count = sys.num_points();
        if count == 0 {
            return Err(RonsError::EmptySamples);
        }
        let scale = domain_size / count as f64;
        let mt = sys.matrix.rows(0, count);
        let ft = sys.rhs.rows(0, count);
        let mut m_bar = mt.tr_mul(&mt) * scale;
        let n = m_bar.nrows();
        for i in 0..n {
            for j in 0..i {
                m_bar[(j, i)] = m_bar[(i, j)];
            }
        }
        let f_bar = mt.tr_mul(&ft) * scale;
        Ok(Self {
            samples: sys.points.clone(),
            dim: sys.dim,
            m_bar,
            f_bar,
            domain_size,
        })
    }
}

pub fn assemble_monte_carlo<A, P>(
    family: &A,
    pde: &P,
    q: &ParameterState,
    samples: &[f64],
    domain_size: f64,
) -> Result<MonteCarloSystem>
where
    A: Ansatz + ?Sized,
    P: PdeOperator<A> + ?Sized,
{
    if samples.is_empty() {
        return Err(RonsError::EmptySamples);
    }
    let sys = assemble_collocation(family, pde, q, samples)?;
    MonteCarloSystem::from_collocation(&sys, domain_size)
}

/// `N` equidistant points on `[-ℓ, ℓ)`.
pub fn equidistant_points(half_width: f64, count: usize) -> Vec<f64> {
    let h = 2.0 * half_width / count as f64;
    (0..count).map(|i| -half_width + i as f64 * h).collect()
}

/// `N` i.i.d. uniform samples on `[-ℓ, ℓ)`.
pub fn uniform_samples<R: Rng + ?Sized>(rng: &mut R, half_width: f64, count: usize) -> Vec<f64> {
    (0..count).map(|_| rng.random_range(-half_width..half_width)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{FourierGalerkin, GaussianMixture, TanhNetwork};
    use crate::pde::{FokkerPlanck, HeatEquation, KuramotoSivashinsky};
    use crate::solver::{pinv_solve, solve_regularized_least_squares, RegularizationConfig};
    use crate::srons::conserved_probability;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tanh_state(rng: &mut ChaCha8Rng, modes: usize) -> ParameterState {
        let m: Vec<Vec<f64>> = (0..modes)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        ParameterState::from_modes(0.0, &m).unwrap()
    }

    #[test]
    fn galerkin_rows_are_basis_values() {
        let family = FourierGalerkin::new(2.0);
        let heat = HeatEquation { diffusivity: 0.3 };
        let q1 = ParameterState::from_modes(0.0, &[vec![0.2], vec![1.0], vec![-0.5]]).unwrap();
        let q2 = ParameterState::from_modes(0.0, &[vec![3.0], vec![-2.0], vec![0.1]]).unwrap();
        let pts = equidistant_points(2.0, 7);
        let a = assemble_collocation(&family, &heat, &q1, &pts).unwrap();
        let b = assemble_collocation(&family, &heat, &q2, &pts).unwrap();
        assert_eq!(a.matrix, b.matrix);
        for (i, x) in pts.iter().enumerate() {
            for j in 0..3 {
                assert_eq!(a.matrix[(i, j)], family.basis(j, *x, 0));
            }
        }
    }

    #[test]
    fn square_interpolation_zeroes_residuals() {
        let family = FourierGalerkin::new(1.0);
        let heat = HeatEquation { diffusivity: 1.0 };
        let q = ParameterState::from_modes(0.0, &[vec![0.5], vec![1.0], vec![-0.3], vec![0.7], vec![0.2]])
            .unwrap();
        let sys = assemble_collocation(&family, &heat, &q, &equidistant_points(1.0, 5)).unwrap();
        let qdot = pinv_solve(&sys.matrix, &sys.rhs, 1e-12).unwrap();
        assert!(sys.residual(&qdot).amax() < 1e-12);
    }

    #[test]
    fn periodic_points_are_wrapped() {
        let family = TanhNetwork::new(10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_tanh_state(&mut rng, 2);
        let a = assemble_collocation(&family, &KuramotoSivashinsky, &q, &[25.0, -13.0]).unwrap();
        let b = assemble_collocation(&family, &KuramotoSivashinsky, &q, &[5.0, 7.0]).unwrap();
        assert_eq!(a.points, vec![5.0, 7.0]);
        assert_eq!(a.matrix, b.matrix);
    }

    #[test]
    fn rows_are_pointwise_residuals() {
        let family = TanhNetwork::new(10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = random_tanh_state(&mut rng, 10);
        let pts = equidistant_points(10.0, 128);
        let sys = assemble_collocation(&family, &KuramotoSivashinsky, &q, &pts).unwrap();
        let qdot = DVector::from_fn(40, |_, _| rng.random_range(-1.0..1.0));
        let res = sys.residual(&qdot);
        let h = 1e-5;
        let shifted = |s: f64| -> Vec<f64> {
            q.values().iter().zip(qdot.iter()).map(|(a, b)| a + s * b).collect()
        };
        let (qp, qm) = (shifted(h), shifted(-h));
        for (i, x) in pts.iter().enumerate() {
            let du = (family.value(&[*x], &qp) - family.value(&[*x], &qm)) / (2.0 * h);
            let f = KuramotoSivashinsky.rhs(&family, &[*x], 0.0, q.values());
            let expected = du - f;
            let scale = expected.abs().max(1.0);
            assert!((res[i] - expected).abs() / scale < 1e-6, "row {i}");
        }
        // exact row semantics through the Jacobian
        for i in 0..128 {
            let jac = family.jacobian(&[pts[i]], q.values());
            let direct: f64 = jac.iter().zip(qdot.iter()).map(|(a, b)| a * b).sum::<f64>()
                - KuramotoSivashinsky.rhs(&family, &[pts[i]], 0.0, q.values());
            assert!((res[i] - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn augmentation_contracts() {
        let family = GaussianMixture::new(2);
        let pde = FokkerPlanck::harmonic_trap(2);
        let q = ParameterState::from_modes(0.0, &[vec![0.6, 1.2, 0.5, 1.0], vec![0.4, 0.9, 1.5, 0.7]]).unwrap();
        let pts: Vec<f64> = (0..20).map(|i| 0.1 * i as f64).collect();
        let sys = assemble_collocation(&family, &pde, &q, &pts).unwrap();
        assert_eq!(augment_constraints(&sys, &[], 1.0).unwrap(), sys);
        let (_, grad) = conserved_probability(&q).unwrap();
        let aug = augment_constraints(&sys, std::slice::from_ref(&grad), 1.0).unwrap();
        assert_eq!(aug.matrix.shape(), (11, 8));
        assert_eq!(aug.rhs[10], 0.0);
        assert_eq!(aug.constraint_rows, 1);
        assert!(augment_constraints(&sys, &[DVector::zeros(3)], 1.0).is_err());
    }

    #[test]
    fn unit_constraint_row_pins_first_entry() {
        // consistent overdetermined system whose exact solution has q̇₁ = 0
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = DMatrix::from_fn(8, 3, |_, _| rng.random_range(-1.0..1.0));
        let x = DVector::from_vec(vec![0.0, 0.7, -1.1]);
        let sys = CollocationSystem {
            points: vec![0.0; 8],
            dim: 1,
            rhs: &a * &x,
            matrix: a,
            constraint_rows: 0,
        };
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let aug = augment_constraints(&sys, &[e1], 1.0).unwrap();
        let qdot = pinv_solve(&aug.matrix, &aug.rhs, 1e-12).unwrap();
        assert!(qdot[0].abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_matches_normal_equations() {
        let family = TanhNetwork::new(10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_tanh_state(&mut rng, 3);
        let samples = uniform_samples(&mut rng, 10.0, 50);
        let mc = assemble_monte_carlo(&family, &KuramotoSivashinsky, &q, &samples, 20.0).unwrap();
        assert_eq!(mc.m_bar, mc.m_bar.transpose());
        let sys = assemble_collocation(&family, &KuramotoSivashinsky, &q, &samples).unwrap();
        let reference = sys.matrix.transpose() * &sys.matrix * (20.0 / 50.0);
        assert!((&mc.m_bar - reference).amax() <= 1e-14 * mc.m_bar.amax());
        assert_eq!(
            assemble_monte_carlo(&family, &KuramotoSivashinsky, &q, &[], 20.0).unwrap_err(),
            RonsError::EmptySamples
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn normal_equations_match_pseudoinverse(seed in any::<u64>(), n in 2usize..12, extra in 1usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows = n + extra;
            let mt = DMatrix::from_fn(rows, n, |_, _| rng.random_range(-1.0..1.0));
            let ft = DVector::from_fn(rows, |_, _| rng.random_range(-1.0..1.0));
            let sys = CollocationSystem { points: vec![0.0; rows], dim: 1, matrix: mt.clone(), rhs: ft.clone(), constraint_rows: 0 };
            let mc = MonteCarloSystem::from_collocation(&sys, 3.0).unwrap();
            let dense = mc.m_bar.clone().cholesky().unwrap().solve(&mc.f_bar);
            let reference = pinv_solve(&mt, &ft, 1e-12).unwrap();
            let (kappa, _, _) = crate::solver::condition_diagnostics(&mt).unwrap();
            prop_assert!((&dense - &reference).norm() / reference.norm() < 1e-8 * kappa);
            let (ls, _) = solve_regularized_least_squares(&mt, &ft, &[], &RegularizationConfig::none()).unwrap();
            prop_assert!((&ls - &reference).norm() / reference.norm() < 1e-8);
        }
    }
}

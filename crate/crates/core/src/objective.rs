//! The penalized observed-likelihood objective and its penalty constants.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CellMcdError, Result};
use crate::linalg::{inverse_spd, SymMatrix};
use crate::model::{Dataset, Params, WeightMatrix};
use crate::par::map_indexed;
use crate::stats::chi2_1_quantile;

pub(crate) fn ln_2pi() -> f64 {
    (2.0 * PI).ln()
}

/// Per-column penalty q_j for flagging a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PenaltyVector(pub Vec<f64>);

impl PenaltyVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for PenaltyVector {
    type Output = f64;

    fn index(&self, j: usize) -> &f64 {
        &self.0[j]
    }
}

/// ln|Σ^(w)| + d^(w) ln(2π) + MD²(x, w, μ, Σ) for one row; zero when no
/// cell is active.
pub fn row_likelihood(x: &[f64], w: &[bool], params: &Params) -> Result<f64> {
    let o: Vec<usize> = (0..w.len()).filter(|&j| w[j]).collect();
    if o.is_empty() {
        return Ok(0.0);
    }
    let s = &params.sigma;
    let s_oo = DMatrix::from_fn(o.len(), o.len(), |a, b| s[(o[a], o[b])]);
    let chol = Cholesky::new(s_oo).ok_or(CellMcdError::NotPositiveDefinite("row scatter"))?;
    let r = DVector::from_iterator(o.len(), o.iter().map(|&j| x[j] - params.mu[j]));
    let md2 = r.dot(&chol.solve(&r)).max(0.0);
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(logdet + o.len() as f64 * ln_2pi() + md2)
}

/// Row likelihood plus Σ_j q_j (1 − w_j).
pub fn row_term(x: &[f64], w: &[bool], params: &Params, q: &PenaltyVector) -> Result<f64> {
    let pen: f64 = w
        .iter()
        .zip(q.as_slice())
        .filter(|(w, _)| !**w)
        .map(|(_, q)| q)
        .sum();
    Ok(row_likelihood(x, w, params)? + pen)
}

/// Sum of the row likelihoods (the objective without penalties).
pub fn likelihood_part(ds: &Dataset, w: &WeightMatrix, params: &Params) -> Result<f64> {
    let terms = map_indexed(ds.n(), 16, |i| row_likelihood(ds.row(i), w.row(i), params));
    let mut total = 0.0;
    for t in terms {
        total += t?;
    }
    Ok(total)
}

/// Penalty part: q_j times the number of flagged cells in column j.
/// Missing cells are not flagging decisions and carry no penalty.
pub fn penalty_part(ds: &Dataset, w: &WeightMatrix, q: &PenaltyVector) -> f64 {
    let mut total = 0.0;
    for j in 0..ds.d() {
        let flagged = (0..ds.n())
            .filter(|&i| ds.is_present(i, j) && !w.get(i, j))
            .count();
        total += q[j] * flagged as f64;
    }
    total
}

/// The full objective: Σ_i L(x_i, w_i, μ, Σ) + Σ_j q_j ‖1 − W_.j‖₀.
pub fn total_objective(
    ds: &Dataset,
    w: &WeightMatrix,
    params: &Params,
    q: &PenaltyVector,
) -> Result<f64> {
    if w.n() != ds.n() || w.d() != ds.d() || q.len() != ds.d() || params.dim() != ds.d() {
        return Err(CellMcdError::DimensionMismatch {
            what: "objective inputs",
            expected: ds.d(),
            found: w.d(),
        });
    }
    Ok(likelihood_part(ds, w, params)? + penalty_part(ds, w, q))
}

/// q_j = χ²₁,p + ln(2π) + ln(C_j) with C_j = 1/(Σ₀⁻¹)_jj.
pub fn calibrate_penalties(sigma0: &SymMatrix, p: f64) -> Result<PenaltyVector> {
    let prec = inverse_spd(sigma0)?;
    let base = chi2_1_quantile(p) + ln_2pi();
    Ok(PenaltyVector(
        (0..sigma0.dim())
            .map(|j| base + (1.0 / prec[(j, j)]).ln())
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::conditional_scalar;
    use crate::linalg::IndexSet;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(d: usize, rng: &mut ChaCha8Rng) -> Params {
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let s = SymMatrix::symmetrize(&a * a.transpose() + DMatrix::identity(d, d) * 0.2);
        let mu = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        Params::new(mu, s).unwrap()
    }

    /// −2 log of the Gaussian density, via explicit determinant and inverse.
    fn neg2loglik_direct(x: &[f64], p: &Params) -> f64 {
        let d = x.len();
        let s = p.sigma.as_matrix().clone();
        let r = DVector::from_fn(d, |j, _| x[j] - p.mu[j]);
        let inv = s.clone().try_inverse().unwrap();
        s.determinant().ln() + d as f64 * (2.0 * PI).ln() + (r.transpose() * inv * &r)[(0, 0)]
    }

    #[test]
    fn empty_row_is_pure_penalty() {
        let p = Params::new(DVector::zeros(3), SymMatrix::identity(3)).unwrap();
        let q = PenaltyVector(vec![1.0; 3]);
        let t = row_term(&[5.0, 1.0, -2.0], &[false; 3], &p, &q).unwrap();
        assert_eq!(t, 3.0);
    }

    #[test]
    fn univariate_at_center() {
        let p = Params::new(DVector::zeros(1), SymMatrix::identity(1)).unwrap();
        let q = PenaltyVector(vec![123.0]);
        let t = row_term(&[0.0], &[true], &p, &q).unwrap();
        assert_relative_eq!(t, (2.0 * PI).ln(), epsilon = 1e-15);
    }

    #[test]
    fn full_row_matches_gaussian_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in [1, 3, 6] {
            let p = random_params(d, &mut rng);
            let q = PenaltyVector(vec![7.0; d]);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let t = row_term(&x, &vec![true; d], &p, &q).unwrap();
            assert_relative_eq!(t, neg2loglik_direct(&x, &p), max_relative = 1e-10);
        }
    }

    #[test]
    fn total_without_flags_is_sample_neg2loglik() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (n, d) = (20, 4);
        let p = random_params(d, &mut rng);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0));
        let ds = Dataset::from_matrix(&x).unwrap();
        let q = PenaltyVector(vec![5.0; d]);
        let w = WeightMatrix::ones(n, d);
        let total = total_objective(&ds, &w, &p, &q).unwrap();
        let direct: f64 = (0..n).map(|i| neg2loglik_direct(ds.row(i), &p)).sum();
        assert_relative_eq!(total, direct, max_relative = 1e-10);
    }

    #[test]
    fn single_flag_changes_objective_by_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, d) = (12, 5);
        let p = random_params(d, &mut rng);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-3.0..3.0));
        let ds = Dataset::from_matrix(&x).unwrap();
        let q = PenaltyVector((0..d).map(|j| 6.0 + 0.3 * j as f64).collect());
        let mut w = WeightMatrix::ones(n, d);
        w.set(0, 1, false);
        w.set(3, 2, false);
        for (i, j) in [(0, 0), (3, 4), (5, 2), (3, 1)] {
            let before = total_objective(&ds, &w, &p, &q).unwrap();
            let obs = IndexSet::from_mask_except(w.row(i), j);
            let (xhat, c) = conditional_scalar(&p.mu, &p.sigma, &obs, ds.row(i), j).unwrap();
            let delta = c.ln() + ln_2pi() + (ds.value(i, j) - xhat).powi(2) / c - q[j];
            let mut w2 = w.clone();
            w2.set(i, j, false);
            let after = total_objective(&ds, &w2, &p, &q).unwrap();
            assert_relative_eq!(after - before, -delta, max_relative = 1e-8, epsilon = 1e-10);
        }
    }

    #[test]
    fn missing_cells_carry_no_penalty() {
        let rows = vec![
            vec![Some(0.1), None],
            vec![Some(-0.3), Some(0.4)],
            vec![Some(0.2), Some(1.0)],
        ];
        let ds = Dataset::from_rows(rows, vec!["a".into(), "b".into()]).unwrap();
        let p = Params::new(DVector::zeros(2), SymMatrix::identity(2)).unwrap();
        let q = PenaltyVector(vec![10.0, 10.0]);
        let w = WeightMatrix::from_presence(&ds);
        let total = total_objective(&ds, &w, &p, &q).unwrap();
        let rows_sum: f64 = (0..3).map(|i| row_likelihood(ds.row(i), w.row(i), &p).unwrap()).sum();
        assert_relative_eq!(total, rows_sum, epsilon = 1e-12);
    }

    #[test]
    fn penalties_identity_and_bivariate() {
        let q = calibrate_penalties(&SymMatrix::identity(3), 0.99).unwrap();
        let expected = chi2_1_quantile(0.99) + (2.0 * PI).ln();
        assert!((expected - 8.473).abs() < 1e-3);
        for v in q.as_slice() {
            assert_relative_eq!(*v, expected, epsilon = 1e-12);
        }
        let rho = 0.6;
        let s = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])).unwrap();
        let q = calibrate_penalties(&s, 0.99).unwrap();
        assert_relative_eq!(q[0], expected + (1.0 - rho * rho).ln(), epsilon = 1e-12);
        assert_relative_eq!(q[1], q[0], epsilon = 1e-12);
    }

    #[test]
    fn calibrate_rejects_singular() {
        let s = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
        assert!(calibrate_penalties(&s, 0.99).is_err());
    }

    #[test]
    fn flagging_rule_equivalence_on_diagonal_scatter() {
        // with diagonal Σ, C_ij = C_j = Σ_jj exactly
        let vars = [0.5, 2.0, 1.3];
        let s = SymMatrix::from_diagonal(&vars);
        let p = Params::new(DVector::from_vec(vec![0.2, -0.1, 0.0]), s.clone()).unwrap();
        let q = calibrate_penalties(&s, 0.99).unwrap();
        let cut = chi2_1_quantile(0.99);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let j = rng.random_range(0..3);
            let x = rng.random_range(-6.0..6.0);
            let c = vars[j];
            let delta = c.ln() + ln_2pi() + (x - p.mu[j]).powi(2) / c - q[j];
            assert_eq!(delta > 0.0, (x - p.mu[j]).powi(2) / c > cut);
        }
    }

    proptest! {
        #[test]
        fn objective_row_permutation_invariant(seed in 0u64..1000, shift in 1usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (n, d) = (10, 3);
            let p = random_params(d, &mut rng);
            let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0));
            let ds = Dataset::from_matrix(&x).unwrap();
            let mut w = WeightMatrix::ones(n, d);
            for _ in 0..5 {
                w.set(rng.random_range(0..n), rng.random_range(0..d), false);
            }
            let q = PenaltyVector(vec![4.0, 5.0, 6.0]);
            let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            let a = total_objective(&ds, &w, &p, &q).unwrap();
            let b = total_objective(&ds.permute_rows(&perm), &w.permute_rows(&perm), &p, &q).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
    }
}

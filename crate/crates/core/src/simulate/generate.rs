//! Clean Gaussian samples, true covariance matrices and adversarial cellwise
//! contamination.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CellMcdError, Result};
use crate::linalg::{mahalanobis_sq, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SigmaType {
    /// Σ_ij = 0.9^|i−j|.
    #[default]
    A09,
    /// Random correlation matrix from a random orthogonal basis and
    /// Dirichlet(1, …, 1) eigenvalues.
    #[serde(rename = "RANDCORR")]
    RandCorr,
}

impl SigmaType {
    pub fn as_str(self) -> &'static str {
        match self {
            SigmaType::A09 => "A09",
            SigmaType::RandCorr => "RANDCORR",
        }
    }
}

fn a09(d: usize) -> SymMatrix {
    SymMatrix::symmetrize(DMatrix::from_fn(d, d, |i, j| {
        0.9f64.powi(i.abs_diff(j) as i32)
    }))
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of R's diagonal folded into Q.
fn random_orthogonal<R: Rng>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_row_iterator(d, d, (0..d * d).map(|_| standard_normal(rng)));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for c in 0..d {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q
}

fn random_correlation<R: Rng>(d: usize, rng: &mut R) -> SymMatrix {
    let q = random_orthogonal(d, rng);
    let e: Vec<f64> = (0..d).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = e.iter().sum();
    let lambda = DVector::from_iterator(d, e.iter().map(|v| d as f64 * v / total));
    let m = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
    let inv_sd: Vec<f64> = (0..d).map(|i| 1.0 / m[(i, i)].sqrt()).collect();
    let mut r = DMatrix::from_fn(d, d, |i, j| m[(i, j)] * inv_sd[i] * inv_sd[j]);
    r.fill_diagonal(1.0);
    SymMatrix::symmetrize(r)
}

/// The true covariance matrix of a simulation run.
pub fn make_sigma<R: Rng>(kind: SigmaType, d: usize, rng: &mut R) -> Result<SymMatrix> {
    if d == 0 {
        return Err(CellMcdError::InvalidScenario("d must be at least 1".into()));
    }
    Ok(match kind {
        SigmaType::A09 => a09(d),
        SigmaType::RandCorr => random_correlation(d, rng),
    })
}

/// n draws from N(0, Σ), one row per draw. Normals are consumed row by row.
pub fn sample_gaussian<R: Rng>(n: usize, sigma: &SymMatrix, rng: &mut R) -> Result<DMatrix<f64>> {
    let d = sigma.dim();
    let l = sigma
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or(CellMcdError::NotPositiveDefinite("true covariance"))?
        .l();
    let z = DMatrix::from_row_iterator(n, d, (0..n * d).map(|_| standard_normal(rng)));
    Ok(z * l.transpose())
}

/// Number of contaminated cells per column: ⌊εn⌋, with a small guard so
/// products such as 0.1·100 are not rounded down to 9.
pub fn cells_per_column(eps: f64, n: usize) -> usize {
    ((eps * n as f64) + 1e-9).floor() as usize
}

/// Unit eigenvector of the smallest eigenvalue, first nonzero component
/// positive.
fn smallest_eigenvector(m: &DMatrix<f64>) -> DVector<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let k = eig.eigenvalues.imin();
    let mut v = eig.eigenvectors.column(k).into_owned();
    v /= v.norm();
    if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
    v
}

/// Replaces ⌊εn⌋ cells per column by structural outliers.
///
/// In every row the selected cells K are replaced by γ√k·v/MD(v), with v
/// the smallest-eigenvalue eigenvector of Σ_K and MD taken around 0. The
/// returned mask marks the replaced cells.
pub fn contaminate<R: Rng>(
    x: &DMatrix<f64>,
    sigma: &SymMatrix,
    eps: f64,
    gamma: f64,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<bool>)> {
    let (n, d) = x.shape();
    if !(0.0..=0.25).contains(&eps) {
        return Err(CellMcdError::InvalidScenario(format!(
            "eps must lie in [0, 0.25], got {eps}"
        )));
    }
    if !(gamma > 0.0) {
        return Err(CellMcdError::InvalidScenario(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let mut mask = DMatrix::from_element(n, d, false);
    let m = cells_per_column(eps, n);
    if m == 0 {
        return Ok((x.clone(), mask));
    }
    for j in 0..d {
        for i in sample(rng, n, m) {
            mask[(i, j)] = true;
        }
    }
    let mut out = x.clone();
    for i in 0..n {
        let k_set: Vec<usize> = (0..d).filter(|&j| mask[(i, j)]).collect();
        if k_set.is_empty() {
            continue;
        }
        let k = k_set.len();
        let s_k = DMatrix::from_fn(k, k, |a, b| sigma[(k_set[a], k_set[b])]);
        let v = smallest_eigenvector(&s_k);
        let md = mahalanobis_sq(&v, &DVector::zeros(k), &s_k)?.sqrt();
        let scale = gamma * (k as f64).sqrt() / md;
        for (a, &j) in k_set.iter().enumerate() {
            out[(i, j)] = scale * v[a];
        }
    }
    Ok((out, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn a09_small_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = make_sigma(SigmaType::A09, 2, &mut rng).unwrap();
        assert_eq!(s.as_matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]));
        let s3 = make_sigma(SigmaType::A09, 3, &mut rng).unwrap();
        // the first-order autoregressive correlation has det (1 − ρ²)^(d−1)
        let det = s3.as_matrix().determinant();
        assert!((det - 0.0361).abs() < 1e-12, "{det}");
    }

    #[test]
    fn random_correlation_has_unit_diagonal_and_is_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in [1, 2, 5, 10] {
            let s = make_sigma(SigmaType::RandCorr, d, &mut rng).unwrap();
            for i in 0..d {
                assert_eq!(s[(i, i)], 1.0);
            }
            assert!(s.min_eigenvalue() > 0.0);
            assert!(s.as_matrix().iter().all(|v| v.abs() <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = random_orthogonal(6, &mut rng);
        let err = (q.transpose() * &q - DMatrix::<f64>::identity(6, 6)).amax();
        assert!(err < 1e-12);
    }

    #[test]
    fn sample_covariance_approaches_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = make_sigma(SigmaType::A09, 3, &mut rng).unwrap();
        let x = sample_gaussian(20_000, &s, &mut rng).unwrap();
        let c = x.transpose() * &x / 20_000.0;
        assert!((c - s.as_matrix()).amax() < 0.05);
    }

    #[test]
    fn single_cell_replacement_equals_gamma() {
        // with unit variances and one selected cell per row, v = 1 and MD = 1
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = SymMatrix::identity(1);
        let x = DMatrix::zeros(50, 1);
        let (y, mask) = contaminate(&x, &s, 0.2, 3.5, &mut rng).unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 10);
        for i in 0..50 {
            assert_eq!(y[(i, 0)], if mask[(i, 0)] { 3.5 } else { 0.0 });
        }
    }

    #[test]
    fn replaced_block_has_the_target_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = make_sigma(SigmaType::A09, 6, &mut rng).unwrap();
        let x = sample_gaussian(100, &s, &mut rng).unwrap();
        let gamma = 4.0;
        let (y, mask) = contaminate(&x, &s, 0.2, gamma, &mut rng).unwrap();
        for j in 0..6 {
            assert_eq!((0..100).filter(|&i| mask[(i, j)]).count(), 20);
        }
        for i in 0..100 {
            let k: Vec<usize> = (0..6).filter(|&j| mask[(i, j)]).collect();
            if k.is_empty() {
                assert_eq!(y.row(i), x.row(i));
                continue;
            }
            let s_k = DMatrix::from_fn(k.len(), k.len(), |a, b| s[(k[a], k[b])]);
            let z = DVector::from_iterator(k.len(), k.iter().map(|&j| y[(i, j)]));
            let md = mahalanobis_sq(&z, &DVector::zeros(k.len()), &s_k).unwrap().sqrt();
            assert!((md - gamma * (k.len() as f64).sqrt()).abs() < 1e-9);
            for j in (0..6).filter(|j| !k.contains(j)) {
                assert_eq!(y[(i, j)], x[(i, j)]);
            }
        }
    }

    #[test]
    fn zero_eps_leaves_data_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = SymMatrix::identity(3);
        let x = sample_gaussian(30, &s, &mut rng).unwrap();
        let (y, mask) = contaminate(&x, &s, 0.0, 10.0, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(mask.iter().all(|m| !m));
    }

    #[test]
    fn column_count_rounds_down() {
        assert_eq!(cells_per_column(0.1, 100), 10);
        assert_eq!(cells_per_column(0.1, 15), 1);
        assert_eq!(cells_per_column(0.2, 400), 80);
        assert_eq!(cells_per_column(0.0, 400), 0);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = SymMatrix::identity(2);
        let x = DMatrix::zeros(10, 2);
        assert!(contaminate(&x, &s, 0.3, 1.0, &mut rng).is_err());
        assert!(contaminate(&x, &s, 0.1, 0.0, &mut rng).is_err());
    }
}

//! Non-robust and rank-based covariance estimators used for comparison.

use nalgebra::DMatrix;

use crate::error::{CellMcdError, Result};
use crate::linalg::{floor_eigenvalues, SymMatrix};
use crate::stats::{average_ranks, normal_quantile, qn_scale};

/// Smallest eigenvalue allowed in the rank-based correlation matrices.
pub const CORRELATION_FLOOR: f64 = 1e-4;

fn column_means(x: &DMatrix<f64>) -> Vec<f64> {
    (0..x.ncols()).map(|j| x.column(j).mean()).collect()
}

/// Maximum likelihood covariance (divisor n).
pub fn classical_cov(x: &DMatrix<f64>) -> SymMatrix {
    let n = x.nrows() as f64;
    let m = column_means(x);
    let xc = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - m[j]);
    SymMatrix::symmetrize(xc.transpose() * &xc / n)
}

/// Pearson correlation of the columns.
fn pearson(x: &DMatrix<f64>) -> DMatrix<f64> {
    let c = classical_cov(x);
    let sd: Vec<f64> = (0..x.ncols()).map(|j| c[(j, j)].sqrt()).collect();
    let mut r = DMatrix::from_fn(x.ncols(), x.ncols(), |a, b| {
        if sd[a] > 0.0 && sd[b] > 0.0 {
            c[(a, b)] / (sd[a] * sd[b])
        } else {
            0.0
        }
    });
    r.fill_diagonal(1.0);
    r
}

fn rank_matrix(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut r = DMatrix::zeros(x.nrows(), x.ncols());
    for j in 0..x.ncols() {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        for (i, v) in average_ranks(&col).into_iter().enumerate() {
            r[(i, j)] = v;
        }
    }
    r
}

/// Floors the eigenvalues, restores the unit diagonal and rescales by the
/// Qn scales of the columns.
fn assemble(x: &DMatrix<f64>, corr: DMatrix<f64>) -> Result<SymMatrix> {
    let d = x.ncols();
    let floored = floor_eigenvalues(&SymMatrix::symmetrize(corr), CORRELATION_FLOOR);
    let diag: Vec<f64> = (0..d).map(|j| floored[(j, j)].sqrt()).collect();
    let scales = (0..d)
        .map(|j| {
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            qn_scale(&col).filter(|s| *s > 0.0).ok_or(CellMcdError::ZeroScale)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SymMatrix::symmetrize(DMatrix::from_fn(d, d, |a, b| {
        scales[a] * scales[b] * floored[(a, b)] / (diag[a] * diag[b])
    })))
}

/// Pearson correlation of the normal scores Φ⁻¹((rank − ½)/n), rescaled by
/// robust column scales.
pub fn grank(x: &DMatrix<f64>) -> Result<SymMatrix> {
    let n = x.nrows() as f64;
    let scores = rank_matrix(x).map(|r| normal_quantile((r - 0.5) / n));
    assemble(x, pearson(&scores))
}

/// Spearman correlation mapped to the Gaussian scale by 2·sin(πr/6), then
/// rescaled by robust column scales.
pub fn spearman(x: &DMatrix<f64>) -> Result<SymMatrix> {
    let r = pearson(&rank_matrix(x));
    let mut g = r.map(|v| 2.0 * (std::f64::consts::PI * v / 6.0).sin());
    g.fill_diagonal(1.0);
    assemble(x, g)
}

/// Raw Spearman rank correlation.
pub fn spearman_correlation(x: &DMatrix<f64>) -> DMatrix<f64> {
    pearson(&rank_matrix(x))
}

/// Cells more than three classical standard deviations from the column
/// mean.
pub fn three_sigma_flags(x: &DMatrix<f64>) -> DMatrix<bool> {
    let c = classical_cov(x);
    let m = column_means(x);
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        (x[(i, j)] - m[j]).abs() > 3.0 * c[(j, j)].sqrt()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::generate::{make_sigma, sample_gaussian, SigmaType};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn classical_matches_explicit_formula() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 5.0, 5.0, 5.0]);
        let c = classical_cov(&x);
        // means (3, 4); deviations (−2,−2), (0,1), (2,1)
        assert!((c[(0, 0)] - 8.0 / 3.0).abs() < 1e-15);
        assert!((c[(0, 1)] - 6.0 / 3.0).abs() < 1e-15);
        assert!((c[(1, 1)] - 6.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn monotone_pair_has_unit_spearman() {
        let x = DMatrix::from_fn(20, 2, |i, j| if j == 0 { i as f64 } else { (i as f64).exp() });
        let r = spearman_correlation(&x);
        assert!((r[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_three_recover_clean_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = make_sigma(SigmaType::A09, 5, &mut rng).unwrap();
        let x = sample_gaussian(20_000, &s, &mut rng).unwrap();
        for (name, est) in [
            ("cov", classical_cov(&x)),
            ("grank", grank(&x).unwrap()),
            ("spearman", spearman(&x).unwrap()),
        ] {
            let dist = (est.as_matrix() - s.as_matrix()).norm();
            assert!(dist < 0.1, "{name}: {dist}");
        }
    }

    #[test]
    fn rank_estimators_are_positive_definite() {
        // more columns than the rank correlation can support
        let x = DMatrix::from_fn(6, 8, |i, j| ((i * 3 + j * 5) % 7) as f64 + 0.01 * j as f64);
        for est in [grank(&x).unwrap(), spearman(&x).unwrap()] {
            assert!(est.min_eigenvalue() > 0.0);
        }
    }

    #[test]
    fn three_sigma_flags_a_gross_cell() {
        let mut x = DMatrix::from_fn(100, 2, |i, j| ((i * 7 + j) % 11) as f64);
        x[(3, 1)] = 1000.0;
        let f = three_sigma_flags(&x);
        assert!(f[(3, 1)]);
        assert_eq!(f.iter().filter(|&&b| b).count(), 1);
    }
}

//! Starting values for the C-steps.
//!
//! A simplified deviating-cells-plus-wrapping initializer: univariate cell
//! flags, a clamped ("wrapped") covariance, one round of casewise rejection
//! in the principal-component basis, and a second clamped estimate in the
//! eigenbasis that is rotated back.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{CellMcdError, Result};
use crate::linalg::{floor_eigenvalues, mahalanobis_sq, SymMatrix};
use crate::model::{Dataset, Params, WeightMatrix};
use crate::stats::{chi2_1_quantile, chi2_quantile, mad, median};

const CLAMP: f64 = 2.0;

/// Flags standardized cells with |z| > √χ²₁,₀.₉₉, at most n − h cells per
/// column counting missing ones; the largest |z| are flagged first.
pub fn initial_flags(ds_std: &Dataset, h: usize) -> WeightMatrix {
    let n = ds_std.n();
    let cut = chi2_1_quantile(0.99).sqrt();
    let mut w = WeightMatrix::from_presence(ds_std);
    for j in 0..ds_std.d() {
        let allowed = (n - h).saturating_sub(ds_std.missing_in_column(j));
        let mut outlying: Vec<(f64, usize)> = (0..n)
            .filter_map(|i| ds_std.get(i, j).map(|z| (z.abs(), i)))
            .filter(|(az, _)| *az > cut)
            .collect();
        outlying.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in outlying.iter().take(allowed) {
            w.set(i, j, false);
        }
    }
    w
}

/// Standardized data with flagged and missing cells set to the robust
/// center 0.
fn imputed_matrix(ds_std: &Dataset, w: &WeightMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(ds_std.n(), ds_std.d(), |i, j| {
        if w.get(i, j) {
            ds_std.value(i, j)
        } else {
            0.0
        }
    })
}

struct Wrapped {
    loc: DVector<f64>,
    cov: DMatrix<f64>,
    /// Clamped deviations from the column medians, in data units.
    dev: DMatrix<f64>,
}

/// Clamped location and covariance of the columns of `y`.
///
/// Each column is robustly standardized, clamped to [−2, 2], and the
/// covariance is diag(s)·R·diag(s) with R the correlation of the clamped
/// values and s the robust scales.
fn wrapped(y: &DMatrix<f64>) -> Wrapped {
    let (n, d) = y.shape();
    let mut loc = DVector::zeros(d);
    let mut scales = vec![0.0; d];
    let mut u = DMatrix::zeros(n, d);
    for k in 0..d {
        let col: Vec<f64> = y.column(k).iter().copied().collect();
        let m = median(&col).unwrap_or(0.0);
        let mut s = mad(&col, m).unwrap_or(0.0);
        if !(s > 1e-12) {
            let mean = col.iter().sum::<f64>() / n as f64;
            s = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        }
        if !(s > 1e-12) {
            s = 1.0;
        }
        for i in 0..n {
            u[(i, k)] = ((col[i] - m) / s).clamp(-CLAMP, CLAMP);
        }
        loc[k] = m + s * u.column(k).mean();
        scales[k] = s;
    }
    let means: Vec<f64> = (0..d).map(|k| u.column(k).mean()).collect();
    let sds: Vec<f64> = (0..d)
        .map(|k| {
            (u.column(k).iter().map(|v| (v - means[k]).powi(2)).sum::<f64>() / n as f64).sqrt()
        })
        .collect();
    let cov = DMatrix::from_fn(d, d, |a, b| {
        if a == b {
            return scales[a] * scales[a];
        }
        if sds[a] <= 1e-12 || sds[b] <= 1e-12 {
            return 0.0;
        }
        let c = (0..n)
            .map(|i| (u[(i, a)] - means[a]) * (u[(i, b)] - means[b]))
            .sum::<f64>()
            / n as f64;
        scales[a] * scales[b] * c / (sds[a] * sds[b])
    });
    let dev = DMatrix::from_fn(n, d, |i, k| scales[k] * u[(i, k)]);
    Wrapped { loc, cov, dev }
}

fn eigenvectors_desc(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let d = m.nrows();
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, idx[c])])
}

/// Cellwise robust starting values on standardized data.
///
/// Returns the starting (μ, Σ) with eig_d(Σ) ≥ `a`, and the starting flags.
pub fn initial_estimate(ds_std: &Dataset, h: usize, a: f64) -> Result<(Params, WeightMatrix)> {
    let (n, d) = (ds_std.n(), ds_std.d());
    let w0 = initial_flags(ds_std, h);
    let z = imputed_matrix(ds_std, &w0);

    // principal axes of the clamped covariance
    let first = wrapped(&z);
    let axes = eigenvectors_desc(&first.cov);
    let zt = &z * &axes;

    // casewise rejection on clamped robust distances
    let pc = wrapped(&zt);
    let pc_cov = floor_eigenvalues(&SymMatrix::symmetrize(pc.cov.clone()), 1e-12);
    let zero = DVector::zeros(d);
    let rd2: Vec<f64> = (0..n)
        .map(|i| mahalanobis_sq(&pc.dev.row(i).transpose(), &zero, &pc_cov))
        .collect::<Result<_>>()?;
    let cutoff =
        chi2_quantile(d, 0.99) * median(&rd2).unwrap_or(0.0) / chi2_quantile(d, 0.5);
    let keep: Vec<usize> = (0..n).filter(|&i| rd2[i] <= cutoff).collect();
    if keep.len() < d + 1 {
        return Err(CellMcdError::InsufficientCases {
            surviving: keep.len(),
            needed: d + 1,
        });
    }

    // second clamped estimate in the eigenbasis of the first, rotated back
    let kept = DMatrix::from_fn(keep.len(), d, |r, c| zt[(keep[r], c)]);
    let axes2 = eigenvectors_desc(&pc.cov);
    let final_est = wrapped(&(&kept * &axes2));
    let rot = &axes * &axes2;
    let mu = &rot * &final_est.loc;
    let sigma = SymMatrix::symmetrize(&rot * &final_est.cov * rot.transpose());
    Ok((Params::new(mu, floor_eigenvalues(&sigma, a))?, w0))
}

/// Mean and covariance of a random h-subset of rows, used for extra starts.
pub(crate) fn random_start<R: Rng>(
    ds_std: &Dataset,
    w0: &WeightMatrix,
    h: usize,
    a: f64,
    rng: &mut R,
) -> Result<Params> {
    let (n, d) = (ds_std.n(), ds_std.d());
    let z = imputed_matrix(ds_std, w0);
    let rows = sample(rng, n, h).into_vec();
    let mut mu = DVector::zeros(d);
    for &i in &rows {
        mu += z.row(i).transpose();
    }
    mu /= h as f64;
    let mut cov = DMatrix::zeros(d, d);
    for &i in &rows {
        let r = z.row(i).transpose() - &mu;
        cov += &r * r.transpose();
    }
    cov /= h as f64;
    Params::new(mu, floor_eigenvalues(&SymMatrix::symmetrize(cov), a))
}

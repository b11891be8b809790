use nalgebra::DMatrix;

use crate::error::{CellMcdError, Result};
use crate::linalg::{log_det_spd, SymMatrix};

/// KL(Σ̂, Σ) = tr(Σ̂Σ⁻¹) − d − ln det(Σ̂Σ⁻¹).
pub fn kl_discrepancy(est: &SymMatrix, truth: &SymMatrix) -> Result<f64> {
    let d = truth.dim();
    if est.dim() != d {
        return Err(CellMcdError::DimensionMismatch {
            what: "estimate",
            expected: d,
            found: est.dim(),
        });
    }
    let chol = truth
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or(CellMcdError::NotPositiveDefinite("true covariance"))?;
    let trace = chol.solve(est.as_matrix()).trace();
    let ld_truth = 2.0 * chol.l().diagonal().map(f64::ln).sum();
    let ld_est = log_det_spd(est.as_matrix())?;
    Ok((trace - d as f64 - (ld_est - ld_truth)).max(0.0))
}

/// Mean over the upper triangle (diagonal included) of the squared error of
/// each entry divided by its asymptotic MLE variance (Σ_jjΣ_kk + Σ_jk²)/n.
pub fn fisher_normalized_sq_error(est: &SymMatrix, truth: &SymMatrix, n: usize) -> f64 {
    let d = truth.dim();
    let mut total = 0.0;
    let mut count = 0usize;
    for j in 0..d {
        for k in j..d {
            let var = (truth[(j, j)] * truth[(k, k)] + truth[(j, k)].powi(2)) / n as f64;
            total += (est[(j, k)] - truth[(j, k)]).powi(2) / var;
            count += 1;
        }
    }
    total / count as f64
}

/// Flag counts against a ground-truth mask, pooled across replications.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlagCounts {
    pub true_positive: usize,
    pub flagged: usize,
    pub contaminated: usize,
}

impl FlagCounts {
    pub fn from_masks(flags: &DMatrix<bool>, truth: &DMatrix<bool>) -> Self {
        let mut c = FlagCounts::default();
        for (f, t) in flags.iter().zip(truth.iter()) {
            c.flagged += *f as usize;
            c.contaminated += *t as usize;
            c.true_positive += (*f && *t) as usize;
        }
        c
    }

    pub fn add(&mut self, other: FlagCounts) {
        self.true_positive += other.true_positive;
        self.flagged += other.flagged;
        self.contaminated += other.contaminated;
    }

    /// `None` when nothing was flagged.
    pub fn precision(&self) -> Option<f64> {
        (self.flagged > 0).then(|| self.true_positive as f64 / self.flagged as f64)
    }

    /// `None` when nothing was contaminated.
    pub fn recall(&self) -> Option<f64> {
        (self.contaminated > 0).then(|| self.true_positive as f64 / self.contaminated as f64)
    }
}

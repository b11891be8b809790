//! Data types shared across the crate: datasets with missing cells,
//! weight matrices, parameter bundles, configuration and fit results.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CellMcdError, Result};
use crate::estimator::robust_loc_scale;
use crate::linalg::SymMatrix;
use crate::objective::PenaltyVector;

/// An n×d numeric table with an explicit presence mask.
///
/// Values are stored row-major; missing cells hold `NaN` and have
/// `present == false`.
#[derive(Debug, Clone)]
pub struct Dataset {
    n: usize,
    d: usize,
    values: Vec<f64>,
    present: Vec<bool>,
    column_names: Vec<String>,
    row_labels: Option<Vec<String>>,
}

/// Equality ignores the placeholder values stored at missing cells.
impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.d == other.d
            && self.present == other.present
            && self.column_names == other.column_names
            && self.row_labels == other.row_labels
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.present)
                .all(|((a, b), &p)| !p || a.to_bits() == b.to_bits())
    }
}

impl Dataset {
    /// Builds a dataset from rows of optional values.
    pub fn from_rows(rows: Vec<Vec<Option<f64>>>, column_names: Vec<String>) -> Result<Self> {
        let n = rows.len();
        let d = column_names.len();
        if n == 0 || d == 0 {
            return Err(CellMcdError::EmptyDataset);
        }
        let mut values = Vec::with_capacity(n * d);
        let mut present = Vec::with_capacity(n * d);
        for row in &rows {
            if row.len() != d {
                return Err(CellMcdError::DimensionMismatch {
                    what: "row length",
                    expected: d,
                    found: row.len(),
                });
            }
            for cell in row {
                match cell {
                    Some(v) if v.is_finite() => {
                        values.push(*v);
                        present.push(true);
                    }
                    Some(_) => return Err(CellMcdError::NonFinite("dataset cell")),
                    None => {
                        values.push(f64::NAN);
                        present.push(false);
                    }
                }
            }
        }
        Ok(Self {
            n,
            d,
            values,
            present,
            column_names,
            row_labels: None,
        })
    }

    /// Builds a complete dataset (no missing cells) from a matrix. Columns
    /// are named `V1..Vd`.
    pub fn from_matrix(x: &DMatrix<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("V{j}")).collect();
        Self::from_matrix_with_mask(x, None, names)
    }

    /// Builds a dataset from a matrix and an optional presence mask.
    pub fn from_matrix_with_mask(
        x: &DMatrix<f64>,
        present: Option<&DMatrix<bool>>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let rows = (0..x.nrows())
            .map(|i| {
                (0..x.ncols())
                    .map(|j| match present {
                        Some(p) if !p[(i, j)] => None,
                        _ => Some(x[(i, j)]),
                    })
                    .collect()
            })
            .collect();
        Self::from_rows(rows, column_names)
    }

    pub fn with_row_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(CellMcdError::DimensionMismatch {
                what: "row labels",
                expected: self.n,
                found: labels.len(),
            });
        }
        self.row_labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn row_labels(&self) -> Option<&[String]> {
        self.row_labels.as_deref()
    }

    /// Label of row `i`: the supplied label, or its 1-based index.
    pub fn row_label(&self, i: usize) -> String {
        match &self.row_labels {
            Some(l) => l[i].clone(),
            None => (i + 1).to_string(),
        }
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CellMcdError::UnknownVariable(name.to_string()))
    }

    /// Raw value of a cell (`NaN` when missing).
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d + j]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.is_present(i, j).then(|| self.value(i, j))
    }

    pub fn is_present(&self, i: usize, j: usize) -> bool {
        self.present[i * self.d + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn present_row(&self, i: usize) -> &[bool] {
        &self.present[i * self.d..(i + 1) * self.d]
    }

    /// Observed values of column `j`.
    pub fn column_observed(&self, j: usize) -> Vec<f64> {
        (0..self.n).filter_map(|i| self.get(i, j)).collect()
    }

    pub fn missing_in_column(&self, j: usize) -> usize {
        (0..self.n).filter(|&i| !self.is_present(i, j)).count()
    }

    pub fn has_missing(&self) -> bool {
        self.present.iter().any(|p| !p)
    }

    /// Values as a matrix, `NaN` at missing cells.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.d, &self.values)
    }

    pub fn present_matrix(&self) -> DMatrix<bool> {
        DMatrix::from_row_slice(self.n, self.d, &self.present)
    }

    /// A new dataset holding only the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(self.n * cols.len());
        let mut present = Vec::with_capacity(self.n * cols.len());
        for i in 0..self.n {
            for &j in cols {
                values.push(self.value(i, j));
                present.push(self.is_present(i, j));
            }
        }
        Dataset {
            n: self.n,
            d: cols.len(),
            values,
            present,
            column_names: cols.iter().map(|&j| self.column_names[j].clone()).collect(),
            row_labels: self.row_labels.clone(),
        }
    }

    /// A new dataset with rows reordered so that row `k` is old row `perm[k]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Dataset {
        assert_eq!(perm.len(), self.n);
        let mut values = Vec::with_capacity(self.values.len());
        let mut present = Vec::with_capacity(self.present.len());
        for &i in perm {
            values.extend_from_slice(self.row(i));
            present.extend_from_slice(self.present_row(i));
        }
        Dataset {
            n: self.n,
            d: self.d,
            values,
            present,
            column_names: self.column_names.clone(),
            row_labels: self
                .row_labels
                .as_ref()
                .map(|l| perm.iter().map(|&i| l[i].clone()).collect()),
        }
    }

    /// Applies `f(j, value)` to every present cell.
    pub fn map_present(&self, f: impl Fn(usize, f64) -> f64) -> Dataset {
        let mut out = self.clone();
        for i in 0..self.n {
            for j in 0..self.d {
                if self.is_present(i, j) {
                    out.values[i * self.d + j] = f(j, self.value(i, j));
                }
            }
        }
        out
    }
}

/// Binary n×d matrix: `true` marks an active cell, `false` a flagged or
/// missing one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightMatrix {
    n: usize,
    d: usize,
    w: Vec<bool>,
}

impl WeightMatrix {
    pub fn ones(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            w: vec![true; n * d],
        }
    }

    /// Ones wherever the dataset has a value.
    pub fn from_presence(ds: &Dataset) -> Self {
        Self {
            n: ds.n(),
            d: ds.d(),
            w: ds.present.clone(),
        }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Self {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == d), "ragged weight rows");
        Self {
            n,
            d,
            w: rows.concat(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.w[i * self.d + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.w[i * self.d + j] = v;
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.w[i * self.d..(i + 1) * self.d]
    }

    /// Number of active cells in column `j`.
    pub fn column_count(&self, j: usize) -> usize {
        (0..self.n).filter(|&i| self.get(i, j)).count()
    }

    pub fn column_counts(&self) -> Vec<usize> {
        (0..self.d).map(|j| self.column_count(j)).collect()
    }

    pub fn zeros_total(&self) -> usize {
        self.w.iter().filter(|v| !**v).count()
    }

    /// Reorders rows: row `k` becomes old row `perm[k]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        let mut w = Vec::with_capacity(self.w.len());
        for &i in perm {
            w.extend_from_slice(self.row(i));
        }
        Self {
            n: self.n,
            d: self.d,
            w,
        }
    }

    pub fn to_matrix(&self) -> DMatrix<bool> {
        DMatrix::from_row_slice(self.n, self.d, &self.w)
    }
}

/// Location and scatter.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub mu: DVector<f64>,
    pub sigma: SymMatrix,
}

impl Params {
    pub fn new(mu: DVector<f64>, sigma: SymMatrix) -> Result<Self> {
        if mu.len() != sigma.dim() {
            return Err(CellMcdError::DimensionMismatch {
                what: "params",
                expected: sigma.dim(),
                found: mu.len(),
            });
        }
        Ok(Self { mu, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Order in which the W-step visits the columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnOrdering {
    /// Descending Σ_i |z_ij| of the standardized data.
    #[default]
    ByTailweightDesc,
    Original,
    ByTailweightAsc,
}

impl std::str::FromStr for ColumnOrdering {
    type Err = CellMcdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "by_tailweight_desc" | "tailweight-desc" => Ok(Self::ByTailweightDesc),
            "original" => Ok(Self::Original),
            "by_tailweight_asc" | "tailweight-asc" => Ok(Self::ByTailweightAsc),
            other => Err(CellMcdError::InvalidConfig(format!(
                "unknown ordering `{other}`"
            ))),
        }
    }
}

/// Tuning constants of the estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellMcdConfig {
    /// Fraction of cells per column that must stay unflagged; h = ⌈alpha·n⌉.
    pub alpha: f64,
    /// Flagging quantile.
    pub p: f64,
    /// Floor for the smallest eigenvalue of the standardized scatter.
    pub a: f64,
    pub max_csteps: usize,
    /// Stop when a C-step lowers the objective by less than this.
    pub tol: f64,
    pub w_substeps: usize,
    pub em_substeps: usize,
    pub ordering: ColumnOrdering,
    /// Additional random starts; the lowest final objective wins.
    pub extra_starts: usize,
    pub seed: u64,
}

impl Default for CellMcdConfig {
    fn default() -> Self {
        Self {
            alpha: 0.75,
            p: 0.99,
            a: 1e-4,
            max_csteps: 100,
            tol: 1e-10,
            w_substeps: 1,
            em_substeps: 1,
            ordering: ColumnOrdering::ByTailweightDesc,
            extra_starts: 0,
            seed: 0,
        }
    }
}

impl CellMcdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CellMcdError::InvalidConfig(m));
        if !(0.75..=1.0).contains(&self.alpha) {
            return bad(format!("alpha = {} must lie in [0.75, 1]", self.alpha));
        }
        if !(self.p > 0.5 && self.p < 1.0) {
            return bad(format!("p = {} must lie in (0.5, 1)", self.p));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return bad(format!("eigenvalue floor a = {} must be positive", self.a));
        }
        if self.max_csteps == 0 || self.w_substeps == 0 || self.em_substeps == 0 {
            return bad("step counts must be positive".into());
        }
        if !(self.tol >= 0.0) {
            return bad(format!("tol = {} must be nonnegative", self.tol));
        }
        Ok(())
    }

    /// h = ⌈alpha·n⌉.
    pub fn h(&self, n: usize) -> usize {
        // guard against 0.75 * n landing a hair above an integer
        let raw = self.alpha * n as f64;
        let h = (raw - 1e-9 * raw.max(1.0)).ceil() as usize;
        h.clamp(1, n)
    }
}

/// Robust per-column location T_j and scale S_j used for standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingInfo {
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DropReason {
    TooManyMissing { missing: usize, limit: usize },
    ZeroScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub index: usize,
    pub name: String,
    #[serde(flatten)]
    pub reason: DropReason,
}

/// Outcome of [`validate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub n: usize,
    pub h: usize,
    /// Indices of the columns that take part in the fit.
    pub kept: Vec<usize>,
    pub dropped: Vec<DroppedColumn>,
}

/// Checks that a dataset can be fitted and decides which columns to drop.
///
/// Columns with more than n − h missing cells or a zero robust scale are
/// dropped; the dataset itself is left untouched.
pub fn validate_dataset(ds: &Dataset, cfg: &CellMcdConfig) -> Result<ValidationReport> {
    cfg.validate()?;
    let n = ds.n();
    let h = cfg.h(n);
    let limit = n - h;

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..ds.d() {
        let missing = ds.missing_in_column(j);
        let reason = if missing > limit {
            Some(DropReason::TooManyMissing { missing, limit })
        } else if robust_loc_scale(&ds.column_observed(j)).is_err() {
            Some(DropReason::ZeroScale)
        } else {
            None
        };
        match reason {
            Some(reason) => dropped.push(DroppedColumn {
                index: j,
                name: ds.column_names()[j].clone(),
                reason,
            }),
            None => kept.push(j),
        }
    }
    if kept.is_empty() {
        return Err(CellMcdError::NoUsableColumns);
    }

    let empty_rows: Vec<usize> = (0..n)
        .filter(|&i| kept.iter().all(|&j| !ds.is_present(i, j)))
        .collect();
    if !empty_rows.is_empty() {
        return Err(CellMcdError::EmptyRows { rows: empty_rows });
    }

    let d = kept.len();
    if n < 5 * d {
        return Err(CellMcdError::TooFewRows { n, d, min: 5 * d });
    }
    if h <= d {
        return Err(CellMcdError::CoverageTooSmall { h, d });
    }
    Ok(ValidationReport {
        n,
        h,
        kept,
        dropped,
    })
}

/// Everything produced by a fit.
///
/// Matrices are indexed by the kept columns (`columns`), in original
/// units unless the field name says otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Names of the fitted columns.
    pub columns: Vec<String>,
    /// Original indices of the fitted columns.
    pub kept_columns: Vec<usize>,
    pub params: Params,
    pub params_std: Params,
    pub w: WeightMatrix,
    /// Conditional expectation x̂_ij of each cell given the unflagged cells
    /// of its row (excluding the cell itself).
    pub preds: DMatrix<f64>,
    /// Conditional variance C_ij that goes with `preds`.
    pub cond_vars: DMatrix<f64>,
    pub objective_trace: Vec<f64>,
    pub n_csteps: usize,
    pub converged: bool,
    pub penalties: PenaltyVector,
    pub scaling: ScalingInfo,
    pub dropped_columns: Vec<DroppedColumn>,
    pub h: usize,
    pub config: CellMcdConfig,
}

impl FitResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }

    /// Flagged cells per fitted column (observed cells only).
    pub fn flagged_per_column(&self, ds: &Dataset) -> Vec<usize> {
        self.kept_columns
            .iter()
            .enumerate()
            .map(|(k, &j)| {
                (0..ds.n())
                    .filter(|&i| ds.is_present(i, j) && !self.w.get(i, k))
                    .count()
            })
            .collect()
    }

    pub fn column_position(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CellMcdError::UnknownVariable(name.to_string()))
    }
}

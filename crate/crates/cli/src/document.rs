//! The `fit.json` document: a lossless serialization of a fit together
//! with the options used to read its input.

use std::path::Path;

use cellmcd::model::DroppedColumn;
use cellmcd::{
    CellMcdConfig, FitResult, Params, PenaltyVector, ScalingInfo, SymMatrix, WeightMatrix,
    SCHEMA_VERSION,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};
use crate::input::ReadOptions;

/// A square matrix with named rows and columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedMatrix {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub schema_version: String,
    pub version: String,
    pub input: ReadOptions,
    pub columns: Vec<String>,
    pub kept_columns: Vec<usize>,
    pub n: usize,
    pub h: usize,
    pub mu: Vec<f64>,
    pub sigma: NamedMatrix,
    pub mu_std: Vec<f64>,
    pub sigma_std: Vec<Vec<f64>>,
    pub penalties: PenaltyVector,
    pub scaling: ScalingInfo,
    pub dropped_columns: Vec<DroppedColumn>,
    pub objective_trace: Vec<f64>,
    pub n_csteps: usize,
    pub converged: bool,
    pub config: CellMcdConfig,
    /// Rows of W, 1 = used, 0 = flagged or missing.
    pub weights: Vec<Vec<u8>>,
    pub predictions: Vec<Vec<f64>>,
    pub conditional_variances: Vec<Vec<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>], ncols: usize, what: &str) -> std::result::Result<DMatrix<f64>, String> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(format!("{what}: every row must have {ncols} entries"));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
}

impl FitDocument {
    pub fn new(fit: &FitResult, input: ReadOptions) -> Self {
        let d = fit.columns.len();
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            input,
            columns: fit.columns.clone(),
            kept_columns: fit.kept_columns.clone(),
            n: fit.w.n(),
            h: fit.h,
            mu: fit.params.mu.iter().copied().collect(),
            sigma: NamedMatrix {
                columns: fit.columns.clone(),
                rows: rows_of(fit.params.sigma.as_matrix()),
            },
            mu_std: fit.params_std.mu.iter().copied().collect(),
            sigma_std: rows_of(fit.params_std.sigma.as_matrix()),
            penalties: fit.penalties.clone(),
            scaling: fit.scaling.clone(),
            dropped_columns: fit.dropped_columns.clone(),
            objective_trace: fit.objective_trace.clone(),
            n_csteps: fit.n_csteps,
            converged: fit.converged,
            config: fit.config.clone(),
            weights: (0..fit.w.n())
                .map(|i| (0..d).map(|j| fit.w.get(i, j) as u8).collect())
                .collect(),
            predictions: rows_of(&fit.preds),
            conditional_variances: rows_of(&fit.cond_vars),
        }
    }

    pub fn to_fit(&self) -> std::result::Result<FitResult, String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let d = self.columns.len();
        if self.mu.len() != d || self.mu_std.len() != d || self.kept_columns.len() != d {
            return Err("vector lengths do not match the number of columns".into());
        }
        let sym = |rows: &[Vec<f64>], what: &str| {
            let m = matrix_of(rows, d, what)?;
            if m.nrows() != d {
                return Err(format!("{what} must be {d}×{d}"));
            }
            SymMatrix::new(m).map_err(|e| format!("{what}: {e}"))
        };
        let params = Params::new(DVector::from_vec(self.mu.clone()), sym(&self.sigma.rows, "sigma")?)
            .map_err(|e| e.to_string())?;
        let params_std = Params::new(
            DVector::from_vec(self.mu_std.clone()),
            sym(&self.sigma_std, "sigma_std")?,
        )
        .map_err(|e| e.to_string())?;
        let w_rows: Vec<Vec<bool>> = self
            .weights
            .iter()
            .map(|r| {
                if r.len() != d {
                    return Err(format!("weights: every row must have {d} entries"));
                }
                r.iter()
                    .map(|&v| match v {
                        0 => Ok(false),
                        1 => Ok(true),
                        other => Err(format!("weights must be 0 or 1, found {other}")),
                    })
                    .collect()
            })
            .collect::<std::result::Result<_, _>>()?;
        if w_rows.len() != self.n {
            return Err(format!("weights must have {} rows", self.n));
        }
        let preds = matrix_of(&self.predictions, d, "predictions")?;
        let cond_vars = matrix_of(&self.conditional_variances, d, "conditional_variances")?;
        if preds.nrows() != self.n || cond_vars.nrows() != self.n {
            return Err(format!("predictions must have {} rows", self.n));
        }
        if self.objective_trace.is_empty() {
            return Err("objective trace is empty".into());
        }
        Ok(FitResult {
            columns: self.columns.clone(),
            kept_columns: self.kept_columns.clone(),
            params,
            params_std,
            w: WeightMatrix::from_rows(&w_rows),
            preds,
            cond_vars,
            objective_trace: self.objective_trace.clone(),
            n_csteps: self.n_csteps,
            converged: self.converged,
            penalties: self.penalties.clone(),
            scaling: self.scaling.clone(),
            dropped_columns: self.dropped_columns.clone(),
            h: self.h,
            config: self.config.clone(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| CliError::BadDocument {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

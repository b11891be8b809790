//! Cellwise minimum covariance determinant (cellMCD) estimation.
//!
//! Robust location and covariance for data where individual cells, rather
//! than whole rows, may be contaminated. The estimator minimizes a
//! penalized observed Gaussian likelihood jointly over (μ, Σ) and a binary
//! weight matrix W that flags outlying cells, subject to at least h
//! unflagged cells per column and a floor on the smallest eigenvalue of Σ.
//!
//! ```no_run
//! use cellmcd::{fit, CellMcdConfig, Dataset};
//! # let x = nalgebra::DMatrix::<f64>::zeros(100, 5);
//! let ds = Dataset::from_matrix(&x)?;
//! let result = fit(&ds, &CellMcdConfig::default())?;
//! println!("{}", result.params.sigma.as_matrix());
//! # Ok::<(), cellmcd::CellMcdError>(())
//! ```
//!
//! With the default `parallel` feature, per-row work inside the C-steps and
//! simulation replications run on rayon. Results are identical to the
//! sequential build: every reduction runs in a fixed order.

pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod model;
pub mod objective;
mod par;
pub mod simulate;
pub mod stats;

pub use error::{CellMcdError, Result};
pub use estimator::fit;
pub use linalg::{IndexSet, SymMatrix};
pub use model::{
    validate_dataset, CellMcdConfig, ColumnOrdering, Dataset, FitResult, Params, ScalingInfo,
    WeightMatrix,
};
pub use objective::{calibrate_penalties, total_objective, PenaltyVector};

/// Version tag written into every JSON document.
pub const SCHEMA_VERSION: &str = "1";

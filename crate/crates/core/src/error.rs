use thiserror::Error;

/// Errors raised by fitting, validation and the numerical primitives.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CellMcdError {
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("index set must be strictly increasing")]
    InvalidIndexSet,

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("rows with no observed values: {rows:?}")]
    EmptyRows { rows: Vec<usize> },

    #[error("no usable columns remain after dropping")]
    NoUsableColumns,

    #[error("too few rows: n = {n} but at least {min} are needed for {d} variables (n >= 5d)")]
    TooFewRows { n: usize, d: usize, min: usize },

    #[error("h = {h} must exceed the number of variables d = {d}")]
    CoverageTooSmall { h: usize, d: usize },

    #[error("column {column} has only {present} observed cells but h = {h}")]
    ColumnBelowCoverage {
        column: usize,
        present: usize,
        h: usize,
    },

    #[error("column has zero or undefined robust scale")]
    ZeroScale,

    #[error("initial estimate kept {surviving} cases but needs at least {needed}")]
    InsufficientCases { surviving: usize, needed: usize },

    #[error("objective increased at C-step {step}: {before} -> {after}")]
    NonMonotone { step: usize, before: f64, after: f64 },

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

pub type Result<T> = std::result::Result<T, CellMcdError>;

use std::path::PathBuf;

use cellmcd::CellMcdError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}, line {line}: column `{column}` is not numeric (found `{value}`)")]
    NonNumeric {
        path: PathBuf,
        line: u64,
        column: String,
        value: String,
    },

    #[error("column `{column}` has a non-positive value {value} at line {line} and cannot be log-transformed")]
    NonPositiveLog { column: String, line: u64, value: f64 },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("{path}: invalid fit document: {message}")]
    BadDocument { path: PathBuf, message: String },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Model(#[from] CellMcdError),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}

//! Library side of the `cellmcd` command-line tool: CSV ingestion, the
//! `fit.json` document and the three subcommands.

pub mod commands;
pub mod document;
pub mod error;
pub mod input;
pub mod output;

pub use error::{CliError, Result};

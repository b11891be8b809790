//! CSV ingestion.

use std::path::Path;

use cellmcd::Dataset;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

/// How a CSV file is turned into a dataset. Stored in `fit.json` so the
/// same data can be reloaded later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadOptions {
    pub na: String,
    pub delimiter: char,
    pub log_columns: Vec<String>,
    pub row_label_column: Option<String>,
}

impl Default for ReadOptions {
    fn default() -> Self {
        Self {
            na: "NA".into(),
            delimiter: ',',
            log_columns: Vec::new(),
            row_label_column: None,
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    let message = e.to_string();
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        _ => CliError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
    }
}

/// Reads a CSV file with a header row. Empty fields and the NA token are
/// missing; any other non-numeric field is an error naming its column.
pub fn load_csv(path: &Path, opts: &ReadOptions) -> Result<Dataset> {
    if !opts.delimiter.is_ascii() {
        return Err(CliError::Usage(format!(
            "delimiter `{}` must be a single ASCII character",
            opts.delimiter
        )));
    }
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter as u8)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "missing header row".into(),
        });
    }

    let label_col = match &opts.row_label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::UnknownColumn(name.clone()))?,
        ),
        None => None,
    };
    let value_cols: Vec<usize> = (0..header.len()).filter(|&c| Some(c) != label_col).collect();
    let names: Vec<String> = value_cols.iter().map(|&c| header[c].clone()).collect();
    let log_idx = opts
        .log_columns
        .iter()
        .map(|name| {
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| CliError::UnknownColumn(name.clone()))
        })
        .collect::<Result<Vec<usize>>>()?;

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if let Some(c) = label_col {
            labels.push(record[c].to_string());
        }
        let mut row = Vec::with_capacity(value_cols.len());
        for (k, &c) in value_cols.iter().enumerate() {
            let field = &record[c];
            if field.is_empty() || field == opts.na {
                row.push(None);
                continue;
            }
            let v: f64 = field.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                CliError::NonNumeric {
                    path: path.to_path_buf(),
                    line,
                    column: names[k].clone(),
                    value: field.to_string(),
                }
            })?;
            if log_idx.contains(&k) {
                if v <= 0.0 {
                    return Err(CliError::NonPositiveLog {
                        column: names[k].clone(),
                        line,
                        value: v,
                    });
                }
                row.push(Some(v.ln()));
            } else {
                row.push(Some(v));
            }
        }
        rows.push(row);
    }

    let ds = Dataset::from_rows(rows, names)?;
    Ok(match label_col {
        Some(_) => ds.with_row_labels(labels)?,
        None => ds,
    })
}

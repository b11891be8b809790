use std::path::{Path, PathBuf};

use cellmcd::diagnostics::{all_plots, compute_diagnostics, plot_dataset, CellDiagnostics, PlotDataset, PlotKind};
use cellmcd::simulate::{parse_scenarios, run_experiment, timings_csv};
use cellmcd::{fit, CellMcdConfig, Dataset, FitResult};

use crate::document::FitDocument;
use crate::error::{io_err, CliError, Result};
use crate::input::{load_csv, ReadOptions};
use crate::output::{csv_text, Outputs};

fn header_with_label(fit: &FitResult) -> Vec<String> {
    std::iter::once("row".to_string())
        .chain(fit.columns.iter().cloned())
        .collect()
}

/// Renders the files written by `fit`.
pub fn fit_outputs(ds: &Dataset, fit: &FitResult, input: &ReadOptions) -> Result<Outputs> {
    let diag = compute_diagnostics(fit, ds)?;
    let (n, d) = (diag.n(), diag.d());
    let mut out = Outputs::default();

    let doc = FitDocument::new(fit, input.clone());
    let json = serde_json::to_string_pretty(&doc).expect("fit document serializes");
    out.add("fit.json", json + "\n");

    let header = header_with_label(fit);
    out.add(
        "weights.csv",
        csv_text(
            &header,
            (0..n).map(|i| {
                std::iter::once(ds.row_label(i))
                    .chain((0..d).map(move |j| (fit.w.get(i, j) as u8).to_string()))
            }),
        ),
    );
    out.add(
        "residuals.csv",
        csv_text(
            &header,
            (0..n).map(|i| {
                let diag = &diag;
                std::iter::once(ds.row_label(i)).chain((0..d).map(move |j| {
                    diag.stdres_at(i, j).map_or("NA".to_string(), |r| r.to_string())
                }))
            }),
        ),
    );

    let mut flagged = Vec::new();
    let mut imputed = Vec::new();
    for i in 0..n {
        for j in 0..d {
            if fit.w.get(i, j) {
                continue;
            }
            match (diag.observed_at(i, j), diag.stdres_at(i, j)) {
                (Some(obs), Some(r)) => flagged.push((i, j, obs, r)),
                _ => imputed.push((i, j)),
            }
        }
    }
    flagged.sort_by(|a, b| b.3.abs().total_cmp(&a.3.abs()).then((a.0, a.1).cmp(&(b.0, b.1))));
    let names = |s: &[&str]| s.iter().map(|v| v.to_string()).collect::<Vec<_>>();
    out.add(
        "flagged_cells.csv",
        csv_text(
            &names(&["row", "column", "observed", "predicted", "stdres"]),
            flagged.iter().map(|&(i, j, obs, r)| {
                vec![
                    ds.row_label(i),
                    fit.columns[j].clone(),
                    obs.to_string(),
                    fit.preds[(i, j)].to_string(),
                    r.to_string(),
                ]
            }),
        ),
    );
    out.add(
        "imputed_cells.csv",
        csv_text(
            &names(&["row", "column", "predicted"]),
            imputed.iter().map(|&(i, j)| {
                vec![ds.row_label(i), fit.columns[j].clone(), fit.preds[(i, j)].to_string()]
            }),
        ),
    );
    Ok(out)
}

pub fn cmd_fit(input: &Path, opts: &ReadOptions, cfg: &CellMcdConfig, out_dir: &Path) -> Result<String> {
    let ds = load_csv(input, opts)?;
    let result = fit(&ds, cfg)?;
    let outputs = fit_outputs(&ds, &result, opts)?;
    outputs.write_all(out_dir)?;
    let flagged: usize = result.flagged_per_column(&ds).iter().sum();
    let mut msg = format!(
        "fitted {} rows × {} columns in {} C-steps; {} cells flagged",
        ds.n(),
        result.columns.len(),
        result.n_csteps,
        flagged
    );
    for dc in &result.dropped_columns {
        msg.push_str(&format!("\ndropped column `{}`", dc.name));
    }
    Ok(msg)
}

fn file_stem(part: &str) -> String {
    part.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn plot_file_name(p: &PlotDataset) -> String {
    let vars: Vec<String> = p.variables.iter().map(|v| file_stem(v)).collect();
    format!("{}_{}.json", p.kind, vars.join("_"))
}

/// Builds the requested plot datasets. Without a kind, every kind is
/// produced; without variables, every fitted column is used.
pub fn build_plots(
    fit: &FitResult,
    diag: &CellDiagnostics,
    kind: Option<PlotKind>,
    variables: &[String],
) -> Result<Vec<PlotDataset>> {
    let vars: Vec<&str> = if variables.is_empty() {
        fit.columns.iter().map(String::as_str).collect()
    } else {
        variables.iter().map(String::as_str).collect()
    };
    for v in &vars {
        fit.column_position(v)?;
    }
    Ok(match kind {
        None => all_plots(fit, diag, &vars)?,
        Some(PlotKind::Bivariate) => {
            if vars.len() != 2 {
                return Err(CliError::Usage(format!(
                    "bivariate plots need exactly two variables, got {}",
                    vars.len()
                )));
            }
            vec![plot_dataset(fit, diag, PlotKind::Bivariate, &vars)?]
        }
        Some(k) => vars
            .iter()
            .map(|v| plot_dataset(fit, diag, k, &[v]))
            .collect::<cellmcd::Result<_>>()?,
    })
}

pub struct DiagnoseArgs<'a> {
    pub input: &'a Path,
    pub fit_path: Option<&'a Path>,
    pub opts: &'a ReadOptions,
    pub cfg: &'a CellMcdConfig,
    pub kind: Option<PlotKind>,
    pub variables: &'a [String],
    pub out_dir: &'a Path,
}

/// Loads the data and the fit (from file or fresh) used by `diagnose`.
/// A fit document carries its own read options, which take precedence.
pub fn load_for_diagnose(args: &DiagnoseArgs) -> Result<(Dataset, FitResult)> {
    match args.fit_path {
        Some(p) => {
            let doc = FitDocument::load(p)?;
            let result = doc.to_fit().map_err(|message| CliError::BadDocument {
                path: p.to_path_buf(),
                message,
            })?;
            let ds = load_csv(args.input, &doc.input)?;
            if ds.n() != result.w.n() {
                return Err(CliError::BadDocument {
                    path: p.to_path_buf(),
                    message: format!("fit has {} rows but the input has {}", result.w.n(), ds.n()),
                });
            }
            Ok((ds, result))
        }
        None => {
            let ds = load_csv(args.input, args.opts)?;
            let result = fit(&ds, args.cfg)?;
            Ok((ds, result))
        }
    }
}

pub fn cmd_diagnose(args: &DiagnoseArgs) -> Result<Vec<PathBuf>> {
    let (ds, result) = load_for_diagnose(args)?;
    let diag = compute_diagnostics(&result, &ds)?;
    let plots = build_plots(&result, &diag, args.kind, args.variables)?;
    let mut out = Outputs::default();
    for p in &plots {
        let json = serde_json::to_string_pretty(p).expect("plot dataset serializes");
        out.add(plot_file_name(p), json + "\n");
    }
    out.write_all(args.out_dir)
}

pub fn cmd_simulate(config: &Path, out_dir: &Path) -> Result<String> {
    let text = std::fs::read_to_string(config).map_err(io_err(config))?;
    let scenarios = parse_scenarios(&text)?;
    let result = run_experiment(&scenarios)?;
    let mut out = Outputs::default();
    out.add("report.csv", result.report.results_csv());
    out.add("report.json", result.report.to_json());
    out.add("efficiency.csv", result.report.efficiency_csv());
    out.add("timings.csv", timings_csv(&result.timings));
    out.write_all(out_dir)?;
    Ok(result.report.summary())
}

use std::path::PathBuf;
use std::process::ExitCode;

use cellmcd::diagnostics::PlotKind;
use cellmcd::{CellMcdConfig, ColumnOrdering, SCHEMA_VERSION};
use cellmcd_cli::commands::{cmd_diagnose, cmd_fit, cmd_simulate, DiagnoseArgs};
use cellmcd_cli::input::ReadOptions;
use cellmcd_cli::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cellmcd", version, about = "Cellwise robust covariance estimation")]
struct Cli {
    /// Print the JSON schema version and exit.
    #[arg(long)]
    schema_version: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the estimator to a CSV file.
    Fit {
        #[command(flatten)]
        io: InputArgs,
        #[command(flatten)]
        est: EstimatorArgs,
        #[arg(long, short, default_value = "cellmcd-out")]
        output_dir: PathBuf,
    },
    /// Write plot datasets (JSON) for the diagnostic plots.
    Diagnose {
        #[command(flatten)]
        io: InputArgs,
        #[command(flatten)]
        est: EstimatorArgs,
        /// A fit.json from a previous `fit`; its read options are reused.
        #[arg(long)]
        fit: Option<PathBuf>,
        /// One of residual_vs_index, residual_vs_observed,
        /// residual_vs_prediction, observed_vs_prediction, bivariate.
        /// All kinds when omitted.
        #[arg(long)]
        kind: Option<PlotKind>,
        /// Variables to plot; all fitted columns when omitted.
        #[arg(long, value_delimiter = ',')]
        variables: Vec<String>,
        #[arg(long, short, default_value = "cellmcd-plots")]
        output_dir: PathBuf,
    },
    /// Run a simulation study described by a TOML scenario file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, short, default_value = "cellmcd-sim")]
        output_dir: PathBuf,
    },
}

#[derive(Args)]
struct InputArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Token marking a missing cell (empty fields are always missing).
    #[arg(long, default_value = "NA")]
    na: String,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Columns replaced by their natural logarithm before fitting.
    #[arg(long, value_delimiter = ',')]
    log_columns: Vec<String>,
    /// Column holding row labels; it is excluded from the data.
    #[arg(long)]
    row_label_column: Option<String>,
}

impl InputArgs {
    fn options(&self) -> ReadOptions {
        ReadOptions {
            na: self.na.clone(),
            delimiter: self.delimiter,
            log_columns: self.log_columns.clone(),
            row_label_column: self.row_label_column.clone(),
        }
    }
}

#[derive(Args)]
struct EstimatorArgs {
    /// Fraction of cells per column that stay unflagged.
    #[arg(long)]
    alpha: Option<f64>,
    /// Flagging quantile p.
    #[arg(long = "quantile", alias = "p")]
    p: Option<f64>,
    /// Floor on the smallest eigenvalue of the standardized scatter.
    #[arg(long = "eigen-floor", alias = "a")]
    a: Option<f64>,
    #[arg(long)]
    max_csteps: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    w_substeps: Option<usize>,
    #[arg(long)]
    em_substeps: Option<usize>,
    /// by_tailweight_desc, original or by_tailweight_asc.
    #[arg(long)]
    ordering: Option<ColumnOrdering>,
    #[arg(long)]
    extra_starts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl EstimatorArgs {
    fn config(&self) -> CellMcdConfig {
        let mut c = CellMcdConfig::default();
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(alpha, p, a, max_csteps, tol, w_substeps, em_substeps, ordering, extra_starts, seed);
        c
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit { io, est, output_dir } => {
            let msg = cmd_fit(&io.input, &io.options(), &est.config(), &output_dir)?;
            eprintln!("{msg}");
            eprintln!("outputs written to {}", output_dir.display());
        }
        Command::Diagnose {
            io,
            est,
            fit,
            kind,
            variables,
            output_dir,
        } => {
            let opts = io.options();
            let cfg = est.config();
            let files = cmd_diagnose(&DiagnoseArgs {
                input: &io.input,
                fit_path: fit.as_deref(),
                opts: &opts,
                cfg: &cfg,
                kind,
                variables: &variables,
                out_dir: &output_dir,
            })?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Simulate { config, output_dir } => {
            let summary = cmd_simulate(&config, &output_dir)?;
            print!("{summary}");
            eprintln!("reports written to {}", output_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.schema_version {
        println!("{SCHEMA_VERSION}");
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (fit, diagnose or simulate); see --help");
        return ExitCode::from(2);
    };
    match run(command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

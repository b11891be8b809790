//! Monte Carlo comparison of cellMCD with classical and rank-based
//! covariance estimators under adversarial cellwise contamination.
//!
//! A [`Scenario`] fixes n, d, the true covariance type and a grid of
//! contamination fractions ε and distances γ. Every grid point runs the same
//! replications: replication r draws from the ChaCha8 stream r of the
//! scenario seed, so the clean data of replication r are shared across the
//! grid and results do not depend on the number of threads.

mod baselines;
mod generate;
mod metrics;

pub use baselines::{classical_cov, grank, spearman, spearman_correlation, three_sigma_flags};
pub use generate::{cells_per_column, contaminate, make_sigma, sample_gaussian, SigmaType};
pub use metrics::{fisher_normalized_sq_error, kl_discrepancy, FlagCounts};

use std::fmt::{self, Write as _};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CellMcdError, Result};
use crate::estimator::fit;
use crate::linalg::SymMatrix;
use crate::model::{CellMcdConfig, Dataset};
use crate::par::map_indexed;
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    CellMcd,
    Cov,
    Grank,
    Spearman,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::CellMcd,
        EstimatorKind::Cov,
        EstimatorKind::Grank,
        EstimatorKind::Spearman,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::CellMcd => "cellMCD",
            EstimatorKind::Cov => "Cov",
            EstimatorKind::Grank => "Grank",
            EstimatorKind::Spearman => "Spearman",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_replications() -> usize {
    30
}

fn default_estimators() -> Vec<EstimatorKind> {
    EstimatorKind::ALL.to_vec()
}

fn default_eps() -> Vec<f64> {
    vec![0.1]
}

fn default_gamma() -> Vec<f64> {
    (1..=10).map(f64::from).collect()
}

/// One simulation design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub n: usize,
    pub d: usize,
    #[serde(default)]
    pub sigma_type: SigmaType,
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "default_gamma")]
    pub gamma: Vec<f64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    /// Settings for the cellMCD fits.
    #[serde(default)]
    pub cellmcd: CellMcdConfig,
}

/// One (ε, γ) combination; γ is absent when ε = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub eps: f64,
    pub gamma: Option<f64>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CellMcdError::InvalidScenario(m));
        if self.n == 0 || self.d == 0 {
            return bad(format!("{}: n and d must be positive", self.name));
        }
        if self.replications == 0 {
            return bad(format!("{}: replications must be positive", self.name));
        }
        if self.eps.is_empty() || self.estimators.is_empty() {
            return bad(format!("{}: eps and estimators must be non-empty", self.name));
        }
        if let Some(e) = self.eps.iter().find(|e| !(0.0..=0.25).contains(*e)) {
            return bad(format!("{}: eps {e} outside [0, 0.25]", self.name));
        }
        if self.eps.iter().any(|&e| e > 0.0) {
            if self.gamma.is_empty() {
                return bad(format!("{}: gamma grid is empty", self.name));
            }
            if let Some(g) = self.gamma.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
                return bad(format!("{}: gamma {g} must be positive", self.name));
            }
        }
        self.cellmcd
            .validate()
            .map_err(|e| CellMcdError::InvalidScenario(format!("{}: {e}", self.name)))
    }

    /// The ε × γ grid in file order. ε = 0 appears once, without γ.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        let mut clean_done = false;
        for &eps in &self.eps {
            if eps == 0.0 {
                if !clean_done {
                    out.push(GridPoint { eps, gamma: None });
                    clean_done = true;
                }
                continue;
            }
            for &g in &self.gamma {
                out.push(GridPoint {
                    eps,
                    gamma: Some(g),
                });
            }
        }
        out
    }
}

/// Parses a TOML file holding one or more `[[scenario]]` tables.
pub fn parse_scenarios(text: &str) -> Result<Vec<Scenario>> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct File {
        scenario: Vec<Scenario>,
    }
    let file: File =
        toml::from_str(text).map_err(|e| CellMcdError::InvalidScenario(e.to_string()))?;
    if file.scenario.is_empty() {
        return Err(CellMcdError::InvalidScenario("no [[scenario]] tables".into()));
    }
    for s in &file.scenario {
        s.validate()?;
    }
    Ok(file.scenario)
}

/// Aggregated results of one estimator at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub n: usize,
    pub d: usize,
    pub sigma_type: SigmaType,
    pub eps: f64,
    pub gamma: Option<f64>,
    pub estimator: EstimatorKind,
    pub replications: usize,
    pub failures: usize,
    pub mean_kl: Option<f64>,
    pub sd_kl: Option<f64>,
    pub flag_precision: Option<f64>,
    pub flag_recall: Option<f64>,
}

/// Finite-sample efficiency relative to the classical estimator, from the
/// clean (ε = 0) grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub scenario: String,
    pub n: usize,
    pub d: usize,
    pub sigma_type: SigmaType,
    pub estimator: EstimatorKind,
    pub fisher_mse: f64,
    pub efficiency: f64,
}

/// Mean wall-clock time per replication. Kept apart from the report so
/// the report stays reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub scenario: String,
    pub eps: f64,
    pub gamma: Option<f64>,
    pub estimator: EstimatorKind,
    pub mean_runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: String,
    pub version: String,
    pub scenarios: Vec<Scenario>,
    pub results: Vec<ReportRow>,
    pub efficiency: Vec<EfficiencyRow>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub timings: Vec<TimingRow>,
}

struct EstimateOutcome {
    kl: f64,
    fisher: f64,
    counts: Option<FlagCounts>,
}

struct ReplicationOutcome {
    per_estimator: Vec<(Result<EstimateOutcome>, f64)>,
    cov_fisher: f64,
}

fn estimate(
    kind: EstimatorKind,
    x: &DMatrix<f64>,
    cfg: &CellMcdConfig,
) -> Result<(SymMatrix, Option<DMatrix<bool>>)> {
    match kind {
        EstimatorKind::CellMcd => {
            let f = fit(&Dataset::from_matrix(x)?, cfg)?;
            if f.kept_columns.len() != x.ncols() {
                return Err(CellMcdError::InvalidScenario(
                    "cellMCD dropped a column".into(),
                ));
            }
            let flags = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| !f.w.get(i, j));
            Ok((f.params.sigma, Some(flags)))
        }
        EstimatorKind::Cov => Ok((classical_cov(x), Some(three_sigma_flags(x)))),
        EstimatorKind::Grank => Ok((grank(x)?, None)),
        EstimatorKind::Spearman => Ok((spearman(x)?, None)),
    }
}

/// The replication's generator: stream `rep` of the scenario seed.
pub fn replication_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

/// True covariance, clean sample, contaminated sample and contamination
/// mask of one replication.
pub fn replication_data(
    sc: &Scenario,
    gp: GridPoint,
    rep: usize,
) -> Result<(SymMatrix, DMatrix<f64>, DMatrix<bool>)> {
    let mut rng = replication_rng(sc.seed, rep);
    let sigma = make_sigma(sc.sigma_type, sc.d, &mut rng)?;
    let clean = sample_gaussian(sc.n, &sigma, &mut rng)?;
    let (x, mask) = contaminate(&clean, &sigma, gp.eps, gp.gamma.unwrap_or(1.0), &mut rng)?;
    Ok((sigma, x, mask))
}

fn run_replication(sc: &Scenario, gp: GridPoint, rep: usize) -> Result<ReplicationOutcome> {
    let (sigma, x, mask) = replication_data(sc, gp, rep)?;
    let per_estimator = sc
        .estimators
        .iter()
        .map(|&kind| {
            let start = Instant::now();
            let res = estimate(kind, &x, &sc.cellmcd).and_then(|(est, flags)| {
                Ok(EstimateOutcome {
                    kl: kl_discrepancy(&est, &sigma)?,
                    fisher: fisher_normalized_sq_error(&est, &sigma, sc.n),
                    counts: flags.map(|f| FlagCounts::from_masks(&f, &mask)),
                })
            });
            (res, start.elapsed().as_secs_f64())
        })
        .collect();
    Ok(ReplicationOutcome {
        per_estimator,
        cov_fisher: fisher_normalized_sq_error(&classical_cov(&x), &sigma, sc.n),
    })
}

fn mean_sd(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let sd = (v.len() > 1).then(|| {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    });
    (Some(m), sd)
}

/// Runs every grid point of one scenario.
pub fn run_scenario(sc: &Scenario) -> Result<(Vec<ReportRow>, Vec<EfficiencyRow>, Vec<TimingRow>)> {
    sc.validate()?;
    let mut rows = Vec::new();
    let mut eff = Vec::new();
    let mut timings = Vec::new();
    for gp in sc.grid() {
        let outcomes = map_indexed(sc.replications, 1, |r| run_replication(sc, gp, r))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mut cov_mse = None;
        let mut eff_here = Vec::new();
        for (e, &kind) in sc.estimators.iter().enumerate() {
            let mut kls = Vec::new();
            let mut fisher = Vec::new();
            let mut cov_fisher = Vec::new();
            let mut counts: Option<FlagCounts> = None;
            let mut failures = 0;
            let mut secs = 0.0;
            for o in &outcomes {
                let (res, t) = &o.per_estimator[e];
                secs += t;
                match res {
                    Ok(r) => {
                        kls.push(r.kl);
                        fisher.push(r.fisher);
                        cov_fisher.push(o.cov_fisher);
                        if let Some(c) = r.counts {
                            counts.get_or_insert_with(FlagCounts::default).add(c);
                        }
                    }
                    Err(_) => failures += 1,
                }
            }
            let (mean_kl, sd_kl) = mean_sd(&kls);
            rows.push(ReportRow {
                scenario: sc.name.clone(),
                n: sc.n,
                d: sc.d,
                sigma_type: sc.sigma_type,
                eps: gp.eps,
                gamma: gp.gamma,
                estimator: kind,
                replications: sc.replications,
                failures,
                mean_kl,
                sd_kl,
                flag_precision: counts.and_then(|c| c.precision()),
                flag_recall: counts.and_then(|c| c.recall()),
            });
            timings.push(TimingRow {
                scenario: sc.name.clone(),
                eps: gp.eps,
                gamma: gp.gamma,
                estimator: kind,
                mean_runtime_ms: 1e3 * secs / sc.replications as f64,
            });
            if gp.eps == 0.0 && !fisher.is_empty() {
                let mse = fisher.iter().sum::<f64>() / fisher.len() as f64;
                let base = cov_fisher.iter().sum::<f64>() / cov_fisher.len() as f64;
                if kind == EstimatorKind::Cov {
                    cov_mse = Some(mse);
                }
                eff_here.push((kind, mse, base));
            }
        }
        for (kind, mse, base) in eff_here {
            let efficiency = if kind == EstimatorKind::Cov {
                1.0
            } else {
                cov_mse.unwrap_or(base) / mse
            };
            eff.push(EfficiencyRow {
                scenario: sc.name.clone(),
                n: sc.n,
                d: sc.d,
                sigma_type: sc.sigma_type,
                estimator: kind,
                fisher_mse: mse,
                efficiency,
            });
        }
    }
    Ok((rows, eff, timings))
}

/// Runs all scenarios in order.
pub fn run_experiment(scenarios: &[Scenario]) -> Result<ExperimentOutput> {
    let mut report = ExperimentReport {
        schema_version: SCHEMA_VERSION.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        scenarios: scenarios.to_vec(),
        results: Vec::new(),
        efficiency: Vec::new(),
    };
    let mut timings = Vec::new();
    for sc in scenarios {
        let (r, e, t) = run_scenario(sc)?;
        report.results.extend(r);
        report.efficiency.extend(e);
        timings.extend(t);
    }
    Ok(ExperimentOutput { report, timings })
}

fn to_csv<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}

impl ExperimentReport {
    pub fn results_csv(&self) -> String {
        to_csv(&self.results)
    }

    pub fn efficiency_csv(&self) -> String {
        to_csv(&self.efficiency)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Mean KL per γ (rows) and estimator (columns), one block per scenario
    /// and ε, followed by the efficiency table.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for sc in &self.scenarios {
            let rows: Vec<&ReportRow> = self.results.iter().filter(|r| r.scenario == sc.name).collect();
            let mut eps_seen: Vec<f64> = Vec::new();
            for r in &rows {
                if !eps_seen.contains(&r.eps) {
                    eps_seen.push(r.eps);
                }
            }
            for eps in eps_seen {
                let _ = writeln!(
                    out,
                    "scenario {} (n={}, d={}, {}), eps={eps}: mean KL",
                    sc.name,
                    sc.n,
                    sc.d,
                    sc.sigma_type.as_str()
                );
                let _ = write!(out, "{:>8}", "gamma");
                for k in &sc.estimators {
                    let _ = write!(out, "{:>12}", k.name());
                }
                let _ = writeln!(out);
                let mut gammas: Vec<Option<f64>> = Vec::new();
                for r in rows.iter().filter(|r| r.eps == eps) {
                    if !gammas.contains(&r.gamma) {
                        gammas.push(r.gamma);
                    }
                }
                for g in gammas {
                    let label = g.map_or("-".to_string(), |g| g.to_string());
                    let _ = write!(out, "{label:>8}");
                    for k in &sc.estimators {
                        let v = rows
                            .iter()
                            .find(|r| r.eps == eps && r.gamma == g && r.estimator == *k)
                            .and_then(|r| r.mean_kl);
                        match v {
                            Some(v) => {
                                let _ = write!(out, "{v:>12.3}");
                            }
                            None => {
                                let _ = write!(out, "{:>12}", "NA");
                            }
                        }
                    }
                    let _ = writeln!(out);
                }
            }
        }
        if !self.efficiency.is_empty() {
            let _ = writeln!(out, "efficiency (clean data, relative to Cov)");
            for e in &self.efficiency {
                let _ = writeln!(out, "  {:<12} {:<10} {:.3}", e.scenario, e.estimator.name(), e.efficiency);
            }
        }
        out
    }
}

/// Timing table as CSV.
pub fn timings_csv(rows: &[TimingRow]) -> String {
    to_csv(rows)
}

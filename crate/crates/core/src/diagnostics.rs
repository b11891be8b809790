//! Standardized cellwise residuals and the data behind the diagnostic plots.
//!
//! Every plot is emitted as a [`PlotDataset`]: points, bands, reference
//! lines, an optional tolerance ellipse and annotations. Rendering is left
//! to external tools, so all constants (cutoff, robust center and scale,
//! ellipse level) are carried in the dataset itself.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CellMcdError, Result};
use crate::model::{Dataset, FitResult, WeightMatrix};
use crate::stats::{chi2_1_quantile, chi2_quantile};
use crate::SCHEMA_VERSION;

/// Number of polyline vertices used to trace the tolerance ellipse.
pub const ELLIPSE_VERTICES: usize = 200;

/// Per-cell diagnostics of a fit, on the fitted columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDiagnostics {
    /// Column names, in fit order.
    pub columns: Vec<String>,
    /// Observed values (NaN where missing).
    pub observed: DMatrix<f64>,
    /// (x − x̂)/√C, NaN where the cell is missing.
    pub stdres: DMatrix<f64>,
    pub flags: WeightMatrix,
    pub preds: DMatrix<f64>,
    pub cond_sd: DMatrix<f64>,
    /// √χ²₁,p for the fit's p.
    pub cutoff_c: f64,
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
    pub row_labels: Vec<String>,
}

impl CellDiagnostics {
    pub fn n(&self) -> usize {
        self.stdres.nrows()
    }

    pub fn d(&self) -> usize {
        self.stdres.ncols()
    }

    /// Standardized residual, `None` for a missing cell.
    pub fn stdres_at(&self, i: usize, j: usize) -> Option<f64> {
        let r = self.stdres[(i, j)];
        (!r.is_nan()).then_some(r)
    }

    pub fn observed_at(&self, i: usize, j: usize) -> Option<f64> {
        let x = self.observed[(i, j)];
        (!x.is_nan()).then_some(x)
    }

    pub fn column_position(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CellMcdError::UnknownVariable(name.to_string()))
    }
}

/// Computes standardized residuals of `ds` under `fit`.
///
/// `ds` must be the dataset the fit was produced on, with all its original
/// columns; the fitted columns are selected via `fit.kept_columns`.
pub fn compute_diagnostics(fit: &FitResult, ds: &Dataset) -> Result<CellDiagnostics> {
    let data = ds.select_columns(&fit.kept_columns);
    let (n, d) = (data.n(), data.d());
    if fit.preds.shape() != (n, d) {
        return Err(CellMcdError::DimensionMismatch {
            what: "fit rows",
            expected: fit.preds.nrows(),
            found: n,
        });
    }
    let observed = DMatrix::from_fn(n, d, |i, j| data.get(i, j).unwrap_or(f64::NAN));
    let cond_sd = fit.cond_vars.map(f64::sqrt);
    let stdres = DMatrix::from_fn(n, d, |i, j| {
        (observed[(i, j)] - fit.preds[(i, j)]) / cond_sd[(i, j)]
    });
    Ok(CellDiagnostics {
        columns: fit.columns.clone(),
        observed,
        stdres,
        flags: fit.w.clone(),
        preds: fit.preds.clone(),
        cond_sd,
        cutoff_c: chi2_1_quantile(fit.config.p).sqrt(),
        centers: fit.scaling.centers.clone(),
        scales: fit.scaling.scales.clone(),
        row_labels: (0..n).map(|i| data.row_label(i)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    ResidualVsIndex,
    ResidualVsObserved,
    ResidualVsPrediction,
    ObservedVsPrediction,
    Bivariate,
}

impl PlotKind {
    pub const ALL: [PlotKind; 5] = [
        PlotKind::ResidualVsIndex,
        PlotKind::ResidualVsObserved,
        PlotKind::ResidualVsPrediction,
        PlotKind::ObservedVsPrediction,
        PlotKind::Bivariate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PlotKind::ResidualVsIndex => "residual_vs_index",
            PlotKind::ResidualVsObserved => "residual_vs_observed",
            PlotKind::ResidualVsPrediction => "residual_vs_prediction",
            PlotKind::ObservedVsPrediction => "observed_vs_prediction",
            PlotKind::Bivariate => "bivariate",
        }
    }

    /// Number of variables the plot needs.
    pub fn arity(self) -> usize {
        if self == PlotKind::Bivariate {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlotKind {
    type Err = CellMcdError;

    fn from_str(s: &str) -> Result<Self> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CellMcdError::InvalidConfig(format!("unknown plot kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    /// Zero-based row index.
    pub row: usize,
    pub label: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub flagged: bool,
    pub points: Vec<Point>,
}

/// A band `center ± multiplier·scale` perpendicular to `axis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub axis: Axis,
    pub center: f64,
    pub scale: f64,
    pub multiplier: f64,
    pub lower: f64,
    pub upper: f64,
    pub label: String,
}

impl Band {
    fn new(axis: Axis, center: f64, scale: f64, multiplier: f64, label: &str) -> Self {
        Band {
            axis,
            center,
            scale,
            multiplier,
            lower: center - multiplier * scale,
            upper: center + multiplier * scale,
            label: label.to_string(),
        }
    }
}

/// The line y = intercept + slope·x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefLine {
    pub slope: f64,
    pub intercept: f64,
    pub label: String,
}

/// {z : (z − center)ᵀ shape⁻¹ (z − center) = level}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseSpec {
    pub center: [f64; 2],
    pub shape: [[f64; 2]; 2],
    pub level: f64,
    pub vertices: Vec<[f64; 2]>,
}

impl EllipseSpec {
    pub fn new(center: [f64; 2], shape: [[f64; 2]; 2], level: f64) -> Result<Self> {
        let m = DMatrix::from_row_slice(2, 2, &[shape[0][0], shape[0][1], shape[1][0], shape[1][1]]);
        let l = m
            .cholesky()
            .ok_or(CellMcdError::NotPositiveDefinite("ellipse shape"))?
            .l();
        let r = level.sqrt();
        let vertices = (0..ELLIPSE_VERTICES)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / ELLIPSE_VERTICES as f64;
                let (u, v) = (r * t.cos(), r * t.sin());
                [
                    center[0] + l[(0, 0)] * u,
                    center[1] + l[(1, 0)] * u + l[(1, 1)] * v,
                ]
            })
            .collect();
        Ok(EllipseSpec {
            center,
            shape,
            level,
            vertices,
        })
    }
}

/// A flagged point, with a segment to its prediction in bivariate plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub row: usize,
    pub label: String,
    pub at: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub segment_to: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisLabels {
    pub x: String,
    pub y: String,
}

/// Everything needed to draw one diagnostic plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotDataset {
    pub schema_version: String,
    pub version: String,
    pub kind: PlotKind,
    pub variables: Vec<String>,
    pub axes: AxisLabels,
    pub cutoff_c: f64,
    pub series: Vec<Series>,
    pub bands: Vec<Band>,
    pub lines: Vec<RefLine>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ellipse: Option<EllipseSpec>,
    pub annotations: Vec<Annotation>,
    /// Rows left out because a needed cell is missing.
    pub omitted_rows: Vec<usize>,
}

fn split_series(points: Vec<(Point, bool)>, flagged_label: &str) -> Vec<Series> {
    let (marked, clean): (Vec<_>, Vec<_>) = points.into_iter().partition(|(_, f)| *f);
    vec![
        Series {
            label: "unflagged".into(),
            flagged: false,
            points: clean.into_iter().map(|(p, _)| p).collect(),
        },
        Series {
            label: flagged_label.into(),
            flagged: true,
            points: marked.into_iter().map(|(p, _)| p).collect(),
        },
    ]
}

/// Builds the data for one plot kind.
///
/// Single-variable kinds take one name in `variables`, the bivariate kind
/// takes two.
pub fn plot_dataset(
    fit: &FitResult,
    diag: &CellDiagnostics,
    kind: PlotKind,
    variables: &[&str],
) -> Result<PlotDataset> {
    if variables.len() != kind.arity() {
        return Err(CellMcdError::InvalidConfig(format!(
            "{kind} needs {} variable(s), got {}",
            kind.arity(),
            variables.len()
        )));
    }
    let cols = variables
        .iter()
        .map(|v| diag.column_position(v))
        .collect::<Result<Vec<_>>>()?;
    let c = diag.cutoff_c;
    let mut out = PlotDataset {
        schema_version: SCHEMA_VERSION.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        kind,
        variables: variables.iter().map(|v| v.to_string()).collect(),
        axes: AxisLabels {
            x: String::new(),
            y: String::new(),
        },
        cutoff_c: c,
        series: Vec::new(),
        bands: Vec::new(),
        lines: Vec::new(),
        ellipse: None,
        annotations: Vec::new(),
        omitted_rows: Vec::new(),
    };

    if kind == PlotKind::Bivariate {
        bivariate(fit, diag, cols[0], cols[1], &mut out)?;
        return Ok(out);
    }

    let j = cols[0];
    let name = &diag.columns[j];
    let (t, s) = (diag.centers[j], diag.scales[j]);
    let residual_band = Band::new(Axis::Y, 0.0, 1.0, c, "cutoff");
    let value_band = |axis| Band::new(axis, t, s, c, "robust_center_scale");
    let mut points = Vec::new();
    for i in 0..diag.n() {
        let (Some(x), Some(r)) = (diag.observed_at(i, j), diag.stdres_at(i, j)) else {
            out.omitted_rows.push(i);
            continue;
        };
        let pred = diag.preds[(i, j)];
        let (px, py) = match kind {
            PlotKind::ResidualVsIndex => ((i + 1) as f64, r),
            PlotKind::ResidualVsObserved => (x, r),
            PlotKind::ResidualVsPrediction => (pred, r),
            PlotKind::ObservedVsPrediction => (pred, x),
            PlotKind::Bivariate => unreachable!(),
        };
        let flagged = !diag.flags.get(i, j);
        if flagged {
            out.annotations.push(Annotation {
                row: i,
                label: diag.row_labels[i].clone(),
                at: [px, py],
                segment_to: None,
            });
        }
        points.push((
            Point {
                row: i,
                label: diag.row_labels[i].clone(),
                x: px,
                y: py,
            },
            flagged,
        ));
    }
    out.series = split_series(points, "flagged");

    let resid_y = format!("standardized residual of {name}");
    match kind {
        PlotKind::ResidualVsIndex => {
            out.axes = AxisLabels {
                x: "index".into(),
                y: resid_y,
            };
            out.bands.push(residual_band);
        }
        PlotKind::ResidualVsObserved => {
            out.axes = AxisLabels {
                x: name.clone(),
                y: resid_y,
            };
            out.bands.push(residual_band);
            out.bands.push(value_band(Axis::X));
        }
        PlotKind::ResidualVsPrediction => {
            out.axes = AxisLabels {
                x: format!("predicted {name}"),
                y: resid_y,
            };
            out.bands.push(residual_band);
            out.bands.push(value_band(Axis::X));
        }
        PlotKind::ObservedVsPrediction => {
            out.axes = AxisLabels {
                x: format!("predicted {name}"),
                y: name.clone(),
            };
            out.bands.push(value_band(Axis::X));
            out.bands.push(value_band(Axis::Y));
            out.lines.push(RefLine {
                slope: 1.0,
                intercept: 0.0,
                label: "identity".into(),
            });
        }
        PlotKind::Bivariate => unreachable!(),
    }
    Ok(out)
}

fn bivariate(
    fit: &FitResult,
    diag: &CellDiagnostics,
    j: usize,
    k: usize,
    out: &mut PlotDataset,
) -> Result<()> {
    if j == k {
        return Err(CellMcdError::InvalidConfig(
            "bivariate plot needs two distinct variables".into(),
        ));
    }
    out.axes = AxisLabels {
        x: diag.columns[j].clone(),
        y: diag.columns[k].clone(),
    };
    let mut points = Vec::new();
    for i in 0..diag.n() {
        let (Some(xj), Some(xk)) = (diag.observed_at(i, j), diag.observed_at(i, k)) else {
            out.omitted_rows.push(i);
            continue;
        };
        let (fj, fk) = (!diag.flags.get(i, j), !diag.flags.get(i, k));
        let flagged = fj || fk;
        if flagged {
            let to = [
                if fj { diag.preds[(i, j)] } else { xj },
                if fk { diag.preds[(i, k)] } else { xk },
            ];
            out.annotations.push(Annotation {
                row: i,
                label: diag.row_labels[i].clone(),
                at: [xj, xk],
                segment_to: Some(to),
            });
        }
        points.push((
            Point {
                row: i,
                label: diag.row_labels[i].clone(),
                x: xj,
                y: xk,
            },
            flagged,
        ));
    }
    out.series = split_series(points, "flagged");
    let mu = &fit.params.mu;
    let s = &fit.params.sigma;
    out.ellipse = Some(EllipseSpec::new(
        [mu[j], mu[k]],
        [[s[(j, j)], s[(j, k)]], [s[(k, j)], s[(k, k)]]],
        chi2_quantile(2, 0.99),
    )?);
    Ok(())
}

/// Every plot for the given variables: the four single-variable kinds for
/// each name, and the bivariate plot for each pair in order.
pub fn all_plots(
    fit: &FitResult,
    diag: &CellDiagnostics,
    variables: &[&str],
) -> Result<Vec<PlotDataset>> {
    let mut out = Vec::new();
    for v in variables {
        for kind in &PlotKind::ALL[..4] {
            out.push(plot_dataset(fit, diag, *kind, &[v])?);
        }
    }
    for a in 0..variables.len() {
        for b in a + 1..variables.len() {
            out.push(plot_dataset(fit, diag, PlotKind::Bivariate, &[variables[a], variables[b]])?);
        }
    }
    Ok(out)
}

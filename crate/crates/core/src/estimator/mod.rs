//! The fitting pipeline: robust standardization, starting values, C-steps
//! and back-transformation to the original units.

mod cstep;
mod init;
mod standardize;

pub use cstep::{
    cell_delta, cell_prediction, column_order, em_step, w_step, CStepState, DeltaMatrix,
    DeltaRecord, MONOTONE_SLACK,
};
pub use init::{initial_estimate, initial_flags};
pub use standardize::{robust_loc_scale, standardize};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{validate_dataset, CellMcdConfig, Dataset, FitResult, Params, WeightMatrix};
use crate::objective::calibrate_penalties;
use crate::par::map_indexed;

/// Per-cell predictions and conditional variances given the final weights.
fn cell_predictions(
    ds_std: &Dataset,
    w: &WeightMatrix,
    params: &Params,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, d) = (ds_std.n(), ds_std.d());
    let rows = map_indexed(n, 8, |i| {
        (0..d)
            .map(|j| cell_prediction(ds_std.row(i), w.row(i), j, params))
            .collect::<Result<Vec<_>>>()
    });
    let mut preds = DMatrix::zeros(n, d);
    let mut vars = DMatrix::zeros(n, d);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, (p, c)) in row?.into_iter().enumerate() {
            preds[(i, j)] = p;
            vars[(i, j)] = c;
        }
    }
    Ok((preds, vars))
}

/// Fits the cellwise MCD to a dataset.
///
/// Columns failing validation are dropped (and reported); the remaining
/// ones are standardized by median/MAD, started from the clamped-covariance
/// initializer and iterated with C-steps until the objective stops
/// decreasing.
pub fn fit(ds: &Dataset, cfg: &CellMcdConfig) -> Result<FitResult> {
    let report = validate_dataset(ds, cfg)?;
    let data = ds.select_columns(&report.kept);
    let (z, scaling) = standardize(&data)?;
    let h = report.h;

    let (p0, w0) = initial_estimate(&z, h, cfg.a)?;
    let q = calibrate_penalties(&p0.sigma, cfg.p)?;
    let mut best = cstep::run_csteps(&z, p0, w0.clone(), &q, cfg)?;

    if cfg.extra_starts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for _ in 0..cfg.extra_starts {
            let start = init::random_start(&z, &w0, h, cfg.a, &mut rng)?;
            let run = cstep::run_csteps(&z, start, w0.clone(), &q, cfg)?;
            if run.trace.last() < best.trace.last() {
                best = run;
            }
        }
    }

    let (preds_std, vars_std) = cell_predictions(&z, &best.w, &best.params)?;
    let (t, s) = (&scaling.centers, &scaling.scales);
    let d = z.d();
    let mu = DVector::from_fn(d, |j, _| t[j] + s[j] * best.params.mu[j]);
    let sigma = best.params.sigma.scale_both(s);
    let preds = DMatrix::from_fn(z.n(), d, |i, j| t[j] + s[j] * preds_std[(i, j)]);
    let cond_vars = DMatrix::from_fn(z.n(), d, |i, j| s[j] * s[j] * vars_std[(i, j)]);

    Ok(FitResult {
        columns: data.column_names().to_vec(),
        kept_columns: report.kept,
        params: Params::new(mu, sigma)?,
        params_std: best.params,
        w: best.w,
        preds,
        cond_vars,
        objective_trace: best.trace,
        n_csteps: best.n_csteps,
        converged: best.converged,
        penalties: q,
        scaling,
        dropped_columns: report.dropped,
        h,
        config: cfg.clone(),
    })
}

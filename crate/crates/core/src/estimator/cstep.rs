//! Concentration steps: the W-step (part a) and the EM-step (part b).

use nalgebra::{DMatrix, DVector};

use crate::error::{CellMcdError, Result};
use crate::linalg::{conditional_scalar, conditional_stats, floor_eigenvalues, IndexSet, SymMatrix};
use crate::model::{CellMcdConfig, ColumnOrdering, Dataset, Params, WeightMatrix};
use crate::objective::{likelihood_part, ln_2pi, total_objective, PenaltyVector};
use crate::par::map_indexed;

/// Current iterate of the C-step loop, on the standardized scale.
#[derive(Debug, Clone, PartialEq)]
pub struct CStepState {
    pub params: Params,
    pub w: WeightMatrix,
    pub objective: f64,
    pub iteration: usize,
}

/// Δ_ij together with the conditional mean and variance it was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaRecord {
    pub delta: f64,
    pub pred: f64,
    pub cond_var: f64,
}

/// Δ records for every cell, as computed during one W-step. Missing cells
/// carry `delta = +∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaMatrix {
    d: usize,
    records: Vec<DeltaRecord>,
}

impl DeltaMatrix {
    pub fn get(&self, i: usize, j: usize) -> DeltaRecord {
        self.records[i * self.d + j]
    }
}

/// Order in which the W-step visits the columns.
pub fn column_order(ds_std: &Dataset, ordering: ColumnOrdering) -> Vec<usize> {
    let d = ds_std.d();
    let mut order: Vec<usize> = (0..d).collect();
    if ordering == ColumnOrdering::Original {
        return order;
    }
    let tail: Vec<f64> = (0..d)
        .map(|j| ds_std.column_observed(j).iter().map(|v| v.abs()).sum())
        .collect();
    match ordering {
        ColumnOrdering::ByTailweightDesc => order.sort_by(|&a, &b| tail[b].total_cmp(&tail[a])),
        ColumnOrdering::ByTailweightAsc => order.sort_by(|&a, &b| tail[a].total_cmp(&tail[b])),
        ColumnOrdering::Original => unreachable!(),
    }
    order
}

/// Conditional mean x̂ and variance C of cell (i, j) given the active cells
/// of its row other than j; with no other active cell this is the marginal.
pub fn cell_prediction(x: &[f64], w: &[bool], j: usize, params: &Params) -> Result<(f64, f64)> {
    let obs = IndexSet::from_mask_except(w, j);
    conditional_scalar(&params.mu, &params.sigma, &obs, x, j)
}

/// Δ_ij = ln C_ij + ln(2π) + (x_ij − x̂_ij)²/C_ij − q_j: the change in the
/// objective from keeping cell (i, j) rather than flagging it.
pub fn cell_delta(x: &[f64], w: &[bool], j: usize, params: &Params, q_j: f64) -> Result<DeltaRecord> {
    let (pred, cond_var) = cell_prediction(x, w, j, params)?;
    Ok(DeltaRecord {
        delta: cond_var.ln() + ln_2pi() + (x[j] - pred).powi(2) / cond_var - q_j,
        pred,
        cond_var,
    })
}

/// Rows to keep in one column: every present row with Δ ≤ 0 when there
/// are at least h of them, otherwise the h smallest Δ (lower row index
/// first on ties).
pub(crate) fn select_kept(deltas: &[(usize, f64)], h: usize) -> Vec<usize> {
    let nonpos: Vec<usize> = deltas
        .iter()
        .filter(|(_, d)| *d <= 0.0)
        .map(|(i, _)| *i)
        .collect();
    if nonpos.len() >= h {
        return nonpos;
    }
    let mut sorted = deltas.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    sorted.into_iter().take(h).map(|(i, _)| i).collect()
}

/// Part (a): updates W column by column with μ, Σ held fixed.
///
/// Later columns see the updates made to earlier ones. Missing cells stay
/// flagged.
pub fn w_step(
    state: &CStepState,
    ds_std: &Dataset,
    q: &PenaltyVector,
    cfg: &CellMcdConfig,
) -> Result<(WeightMatrix, DeltaMatrix)> {
    let (n, d) = (ds_std.n(), ds_std.d());
    let h = cfg.h(n);
    let params = &state.params;
    let mut w = state.w.clone();
    let mut records = vec![
        DeltaRecord {
            delta: f64::INFINITY,
            pred: f64::NAN,
            cond_var: f64::NAN,
        };
        n * d
    ];
    for j in column_order(ds_std, cfg.ordering) {
        let col: Vec<Result<DeltaRecord>> = map_indexed(n, 8, |i| {
            let x = ds_std.row(i);
            let rec = cell_delta(x, w.row(i), j, params, q[j])?;
            Ok(if ds_std.is_present(i, j) {
                rec
            } else {
                DeltaRecord {
                    delta: f64::INFINITY,
                    ..rec
                }
            })
        });
        let mut present = Vec::with_capacity(n);
        for (i, rec) in col.into_iter().enumerate() {
            let rec = rec?;
            records[i * d + j] = rec;
            if ds_std.is_present(i, j) {
                present.push((i, rec.delta));
            }
        }
        if present.len() < h {
            return Err(CellMcdError::ColumnBelowCoverage {
                column: j,
                present: present.len(),
                h,
            });
        }
        for i in 0..n {
            w.set(i, j, false);
        }
        for i in select_kept(&present, h) {
            w.set(i, j, true);
        }
    }
    Ok((w, DeltaMatrix { d, records }))
}

/// Part (b): one EM-step for the incomplete-data Gaussian likelihood with
/// the cells where `w` is 0 treated as missing, followed by flooring the
/// eigenvalues at `a`.
pub fn em_step(ds_std: &Dataset, w: &WeightMatrix, params: &Params, a: f64) -> Result<Params> {
    let (n, d) = (ds_std.n(), ds_std.d());
    let rows: Vec<Result<(Vec<f64>, Option<(IndexSet, DMatrix<f64>)>)>> =
        map_indexed(n, 8, |i| {
            let x = ds_std.row(i);
            let wi = w.row(i);
            if wi.iter().all(|&v| v) {
                return Ok((x.to_vec(), None));
            }
            let obs = IndexSet::from_mask(wi);
            let mis = IndexSet::from_mask(&wi.iter().map(|v| !v).collect::<Vec<_>>());
            let cs = conditional_stats(&params.mu, &params.sigma, &obs, &obs.gather(x), &mis)?;
            let mut imputed = x.to_vec();
            for (k, &j) in mis.as_slice().iter().enumerate() {
                imputed[j] = cs.mean[k];
            }
            Ok((imputed, Some((mis, cs.cov))))
        });

    let mut imputed = Vec::with_capacity(n);
    let mut bias = DMatrix::<f64>::zeros(d, d);
    for r in rows {
        let (x, b) = r?;
        if let Some((mis, cov)) = b {
            let m = mis.as_slice();
            for (a_, &ja) in m.iter().enumerate() {
                for (b_, &jb) in m.iter().enumerate() {
                    bias[(ja, jb)] += cov[(a_, b_)];
                }
            }
        }
        imputed.push(x);
    }

    let mut mu = DVector::<f64>::zeros(d);
    for x in &imputed {
        for j in 0..d {
            mu[j] += x[j];
        }
    }
    mu /= n as f64;
    let mut scatter = bias;
    for x in &imputed {
        for a_ in 0..d {
            let ra = x[a_] - mu[a_];
            for b_ in a_..d {
                scatter[(a_, b_)] += ra * (x[b_] - mu[b_]);
            }
        }
    }
    for a_ in 0..d {
        for b_ in 0..a_ {
            scatter[(a_, b_)] = scatter[(b_, a_)];
        }
    }
    scatter /= n as f64;
    Params::new(mu, floor_eigenvalues(&SymMatrix::symmetrize(scatter), a))
}

/// Output of the C-step loop.
#[derive(Debug, Clone)]
pub(crate) struct CStepRun {
    pub params: Params,
    pub w: WeightMatrix,
    pub trace: Vec<f64>,
    pub n_csteps: usize,
    pub converged: bool,
}

/// Objective increases smaller than this count as roundoff.
pub const MONOTONE_SLACK: f64 = 1e-8;

/// Iterates C-steps from a starting point until the objective decrease
/// drops below `cfg.tol` or `cfg.max_csteps` is reached.
pub(crate) fn run_csteps(
    ds_std: &Dataset,
    params: Params,
    w: WeightMatrix,
    q: &PenaltyVector,
    cfg: &CellMcdConfig,
) -> Result<CStepRun> {
    let h = cfg.h(ds_std.n());
    let objective = total_objective(ds_std, &w, &params, q)?;
    let mut state = CStepState {
        params,
        w,
        objective,
        iteration: 0,
    };
    let mut trace = vec![objective];
    let mut converged = false;
    while state.iteration < cfg.max_csteps {
        for _ in 0..cfg.w_substeps {
            state.w = w_step(&state, ds_std, q, cfg)?.0;
        }
        debug_assert!(state.w.column_counts().iter().all(|&c| c >= h));
        for _ in 0..cfg.em_substeps {
            state.params = em_step(ds_std, &state.w, &state.params, cfg.a)?;
        }
        state.iteration += 1;
        let new = total_objective(ds_std, &state.w, &state.params, q)?;
        debug_assert!({
            let bound: f64 = (0..ds_std.n())
                .map(|i| state.w.row(i).iter().filter(|v| **v).count() as f64 * cfg.a.ln())
                .sum();
            likelihood_part(ds_std, &state.w, &state.params)? >= bound - 1e-8
        });
        if new > state.objective + MONOTONE_SLACK {
            return Err(CellMcdError::NonMonotone {
                step: state.iteration,
                before: state.objective,
                after: new,
            });
        }
        trace.push(new);
        let decrease = state.objective - new;
        state.objective = new;
        if decrease < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(CStepRun {
        params: state.params,
        w: state.w,
        trace,
        n_csteps: state.iteration,
        converged,
    })
}

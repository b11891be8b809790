use crate::error::{CellMcdError, Result};
use crate::model::{Dataset, ScalingInfo};
use crate::stats::{mad, median};

/// Median and 1.4826·MAD of the observed values of a column.
///
/// Fails with [`CellMcdError::ZeroScale`] when fewer than two values are
/// available or the MAD vanishes; such a column has to be dropped.
pub fn robust_loc_scale(column: &[f64]) -> Result<(f64, f64)> {
    if column.len() < 2 {
        return Err(CellMcdError::ZeroScale);
    }
    let t = median(column).ok_or(CellMcdError::ZeroScale)?;
    let s = mad(column, t).ok_or(CellMcdError::ZeroScale)?;
    if !(s > 0.0 && s.is_finite()) {
        return Err(CellMcdError::ZeroScale);
    }
    Ok((t, s))
}

/// Robustly standardizes every column: z_ij = (x_ij − T_j)/S_j.
pub fn standardize(ds: &Dataset) -> Result<(Dataset, ScalingInfo)> {
    let mut centers = Vec::with_capacity(ds.d());
    let mut scales = Vec::with_capacity(ds.d());
    for j in 0..ds.d() {
        let (t, s) = robust_loc_scale(&ds.column_observed(j))?;
        centers.push(t);
        scales.push(s);
    }
    let z = ds.map_present(|j, v| (v - centers[j]) / scales[j]);
    Ok((z, ScalingInfo { centers, scales }))
}

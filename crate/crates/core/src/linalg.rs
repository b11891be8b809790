//! Dense symmetric linear algebra: index-set submatrices, Gaussian
//! conditioning through Schur complements, Mahalanobis distances and
//! eigenvalue flooring.

use std::ops::Deref;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{CellMcdError, Result};

const SYMMETRY_RTOL: f64 = 1e-12;

/// A dense symmetric real matrix.
///
/// Construction symmetrizes the input as `(S + Sᵀ)/2`, so downstream code
/// can rely on exact symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Checks that `m` is square, finite and symmetric to within `1e-12`
    /// relative tolerance.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(CellMcdError::DimensionMismatch {
                what: "symmetric matrix",
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(CellMcdError::NonFinite("symmetric matrix"));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let d = m.nrows();
        for i in 0..d {
            for j in (i + 1)..d {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_RTOL * scale {
                    return Err(CellMcdError::NotSymmetric);
                }
            }
        }
        Ok(Self::symmetrize(m))
    }

    /// Replaces `m` by `(m + mᵀ)/2` without checking.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "symmetrize needs a square matrix");
        let t = m.transpose();
        Self((m + t) * 0.5)
    }

    pub fn identity(d: usize) -> Self {
        Self(DMatrix::identity(d, d))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues_desc(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.0.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues_desc().last().copied().unwrap_or(f64::INFINITY)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues_desc().first().copied().unwrap_or(0.0)
    }

    /// `diag(s) · self · diag(s)`.
    pub fn scale_both(&self, s: &[f64]) -> Self {
        let d = self.dim();
        assert_eq!(s.len(), d);
        Self(DMatrix::from_fn(d, d, |i, j| s[i] * self.0[(i, j)] * s[j]))
    }
}

impl Deref for SymMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// A strictly increasing list of coordinate indices; may be empty.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CellMcdError::InvalidIndexSet);
        }
        Ok(Self(indices))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn single(i: usize) -> Self {
        Self(vec![i])
    }

    pub fn full(d: usize) -> Self {
        Self((0..d).collect())
    }

    /// Indices `j` with `mask[j] == true`.
    pub fn from_mask(mask: &[bool]) -> Self {
        Self(
            mask.iter()
                .enumerate()
                .filter_map(|(j, &m)| m.then_some(j))
                .collect(),
        )
    }

    /// Indices `j` with `mask[j] == true`, leaving out `skip`.
    pub fn from_mask_except(mask: &[bool], skip: usize) -> Self {
        Self(
            mask.iter()
                .enumerate()
                .filter_map(|(j, &m)| (m && j != skip).then_some(j))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    fn check_bound(&self, dim: usize) -> Result<()> {
        match self.0.last() {
            Some(&last) if last >= dim => Err(CellMcdError::IndexOutOfRange { index: last, dim }),
            _ => Ok(()),
        }
    }

    /// Picks the entries of `v` at these indices.
    pub fn gather(&self, v: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.0.len(), self.0.iter().map(|&j| v[j]))
    }
}

/// Conditional mean and covariance of a block of coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CondStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// `S` restricted to the given rows and columns.
pub fn submatrix(s: &DMatrix<f64>, rows: &IndexSet, cols: &IndexSet) -> Result<DMatrix<f64>> {
    rows.check_bound(s.nrows())?;
    cols.check_bound(s.ncols())?;
    let (r, c) = (rows.as_slice(), cols.as_slice());
    Ok(DMatrix::from_fn(r.len(), c.len(), |i, j| s[(r[i], c[j])]))
}

fn cholesky(m: DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or(CellMcdError::NotPositiveDefinite(what))
}

/// Distribution of the `targets` coordinates given the `observed`
/// coordinates take the values `x_obs`.
///
/// mean = μ_t + Σ_to Σ_oo⁻¹ (x_o − μ_o), cov = Σ_tt − Σ_to Σ_oo⁻¹ Σ_ot.
/// An empty observed set gives the marginal (μ_t, Σ_tt).
pub fn conditional_stats(
    mu: &DVector<f64>,
    s: &SymMatrix,
    observed: &IndexSet,
    x_obs: &DVector<f64>,
    targets: &IndexSet,
) -> Result<CondStats> {
    let d = s.dim();
    if mu.len() != d {
        return Err(CellMcdError::DimensionMismatch {
            what: "location",
            expected: d,
            found: mu.len(),
        });
    }
    if x_obs.len() != observed.len() {
        return Err(CellMcdError::DimensionMismatch {
            what: "observed values",
            expected: observed.len(),
            found: x_obs.len(),
        });
    }
    observed.check_bound(d)?;
    targets.check_bound(d)?;
    if targets.as_slice().iter().any(|&t| observed.contains(t)) {
        return Err(CellMcdError::InvalidIndexSet);
    }

    let mu_t = targets.gather(mu.as_slice());
    let s_tt = submatrix(s, targets, targets)?;
    if observed.is_empty() {
        return Ok(CondStats {
            mean: mu_t,
            cov: s_tt,
        });
    }
    let s_oo = submatrix(s, observed, observed)?;
    let s_to = submatrix(s, targets, observed)?;
    let chol = cholesky(s_oo, "observed block")?;
    let resid = x_obs - observed.gather(mu.as_slice());
    let mean = mu_t + &s_to * chol.solve(&resid);
    let cov = s_tt - &s_to * chol.solve(&s_to.transpose());
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(CondStats { mean, cov })
}

/// Conditional mean and variance of the single coordinate `target` given
/// `observed`, on the hot path of the W-step and diagnostics.
pub(crate) fn conditional_scalar(
    mu: &DVector<f64>,
    s: &SymMatrix,
    observed: &IndexSet,
    x: &[f64],
    target: usize,
) -> Result<(f64, f64)> {
    let o = observed.as_slice();
    if o.is_empty() {
        return Ok((mu[target], s[(target, target)]));
    }
    let s_oo = DMatrix::from_fn(o.len(), o.len(), |a, b| s[(o[a], o[b])]);
    let chol = cholesky(s_oo, "observed block")?;
    let s_ot = DVector::from_iterator(o.len(), o.iter().map(|&k| s[(k, target)]));
    let resid = DVector::from_iterator(o.len(), o.iter().map(|&k| x[k] - mu[k]));
    let coef = chol.solve(&s_ot);
    let mean = mu[target] + coef.dot(&resid);
    let var = s[(target, target)] - coef.dot(&s_ot);
    Ok((mean, var))
}

/// (x − μ)ᵀ S⁻¹ (x − μ) via a Cholesky solve.
pub fn mahalanobis_sq(x: &DVector<f64>, mu: &DVector<f64>, s: &DMatrix<f64>) -> Result<f64> {
    if x.len() != mu.len() || s.nrows() != x.len() || s.ncols() != x.len() {
        return Err(CellMcdError::DimensionMismatch {
            what: "mahalanobis inputs",
            expected: s.nrows(),
            found: x.len(),
        });
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let chol = cholesky(s.clone(), "mahalanobis scatter")?;
    let r = x - mu;
    Ok(r.dot(&chol.solve(&r)).max(0.0))
}

/// ln|S| of a positive definite matrix; `0` for the empty matrix.
pub fn log_det_spd(s: &DMatrix<f64>) -> Result<f64> {
    if s.is_empty() {
        return Ok(0.0);
    }
    let chol = cholesky(s.clone(), "log determinant")?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Inverse of a positive definite matrix.
pub fn inverse_spd(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = cholesky(s.clone(), "inverse")?;
    Ok(chol.inverse())
}

/// Keeps the eigenvectors of `S` and replaces each eigenvalue λ by
/// max(λ, a).
pub fn floor_eigenvalues(s: &SymMatrix, a: f64) -> SymMatrix {
    let eig = SymmetricEigen::new(s.as_matrix().clone());
    if eig.eigenvalues.iter().all(|&l| l >= a) {
        return s.clone();
    }
    let floored = eig.eigenvalues.map(|l| l.max(a));
    let v = &eig.eigenvectors;
    SymMatrix::symmetrize(v * DMatrix::from_diagonal(&floored) * v.transpose())
}

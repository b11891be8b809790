//! Index-ordered map that runs on rayon when the `parallel` feature is on.
//!
//! Results always come back in index order, so any reduction done by the
//! caller over the returned vector has a fixed summation order regardless
//! of the thread schedule.

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, min_len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n)
        .into_par_iter()
        .with_min_len(min_len.max(1))
        .map(f)
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, _min_len: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

//! Univariate helpers: medians, robust scales, ranks and the quantile
//! functions used for cutoffs.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Consistency factor making the MAD unbiased for σ at the normal.
pub const MAD_CONSISTENCY: f64 = 1.4826;

/// Median of the values; `None` when empty. Even counts average the two
/// middle order statistics.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// 1.4826 · median |x − median(x)|.
pub fn mad(values: &[f64], center: f64) -> Option<f64> {
    let dev: Vec<f64> = values.iter().map(|v| (v - center).abs()).collect();
    median(&dev).map(|m| MAD_CONSISTENCY * m)
}

/// Rousseeuw–Croux Qn scale with the normal consistency constant and the
/// usual small-sample correction.
///
/// The k-th smallest pairwise distance is found by bisection on the bit
/// patterns of non-negative floats, counting pairs with a two-pointer sweep
/// over the sorted values, so memory stays linear in n.
pub fn qn_scale(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 || values.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut x = values.to_vec();
    x.sort_by(f64::total_cmp);
    let h = n / 2 + 1;
    let k = h * (h - 1) / 2;
    // pairs i < j with x_j − x_i ≤ t
    let count_le = |t: f64| -> usize {
        let mut total = 0;
        let mut j = 0;
        for i in 0..n {
            if j < i + 1 {
                j = i + 1;
            }
            while j < n && x[j] - x[i] <= t {
                j += 1;
            }
            total += j - i - 1;
        }
        total
    };
    let (mut lo, mut hi) = (0u64, (x[n - 1] - x[0]).to_bits());
    if count_le(0.0) >= k {
        hi = 0;
    }
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if count_le(f64::from_bits(mid)) >= k {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let raw = 2.2219 * f64::from_bits(hi);
    let dn = match n {
        2 => 0.399,
        3 => 0.994,
        4 => 0.512,
        5 => 0.844,
        6 => 0.611,
        7 => 0.857,
        8 => 0.669,
        9 => 0.872,
        _ if n % 2 == 1 => n as f64 / (n as f64 + 1.4),
        _ => n as f64 / (n as f64 + 3.8),
    };
    Some(raw * dn)
}

/// Average ranks (1-based) with ties sharing the mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let r = 0.5 * ((start + 1) + end) as f64;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Standard normal quantile function.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// χ²₁ quantile as the square of the normal quantile at (1 + p)/2.
pub fn chi2_1_quantile(p: f64) -> f64 {
    normal_quantile(0.5 * (1.0 + p)).powi(2)
}

/// χ² quantile with `df` degrees of freedom.
pub fn chi2_quantile(df: usize, p: f64) -> f64 {
    match df {
        1 => chi2_1_quantile(p),
        2 => -2.0 * (1.0 - p).ln(),
        _ => ChiSquared::new(df as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(p),
    }
}

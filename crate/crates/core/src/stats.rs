//! Order statistics and small regression helpers shared by the estimators.

use crate::error::{invalid, Result};

/// The `(1-δ)` empirical quantile: the order statistic at 1-based index
/// `⌈(1-δ)n⌉`, clamped to `[1, n]`. `δ = 1` returns the minimum.
pub fn upper_quantile(values: &[f64], delta: f64) -> Result<f64> {
    if values.is_empty() {
        return invalid("quantile of an empty sample");
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return invalid(format!("delta must lie in (0, 1], got {delta}"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[quantile_index(values.len(), delta)])
}

/// Zero-based index of the `⌈(1-δ)n⌉` order statistic.
pub fn quantile_index(n: usize, delta: f64) -> usize {
    let k = ((1.0 - delta) * n as f64 - 1e-9).ceil() as usize;
    k.clamp(1, n) - 1
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Unbiased sample variance.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

//! Distances between 1-d laws and samples.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mixture::{merge_intervals, IsotropicGaussianMixture};
use crate::quadrature::integrate_intervals;

pub const TV_WINDOW_SD: f64 = 12.0;
pub const TV_TOLERANCE: f64 = 1e-8;
pub const MIN_BINS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    TvQuadrature,
    TvBinned,
    W2Empirical1d,
    W2GaussianExact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub kind: DistanceKind,
    pub value: f64,
    pub standard_error: Option<f64>,
}

/// `½∫|p - q|` by adaptive Simpson over the 12-sd windows of both laws.
pub fn tv_quadrature_1d(p: &IsotropicGaussianMixture, q: &IsotropicGaussianMixture) -> Result<DistanceEstimate> {
    if p.dim() != 1 || q.dim() != 1 {
        return invalid(format!(
            "tv_quadrature_1d needs 1-d laws, got d = {} and {}",
            p.dim(),
            q.dim()
        ));
    }
    let mut windows = p.support_intervals(TV_WINDOW_SD);
    windows.extend(q.support_intervals(TV_WINDOW_SD));
    // split at every window edge and component mean so narrow spikes sit on panel nodes
    let mut cuts: Vec<f64> = windows.iter().flat_map(|&(a, b)| [a, b]).collect();
    cuts.extend(p.components().iter().chain(q.components()).map(|c| c.mean()[0]));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let pieces: Vec<(f64, f64)> = merge_intervals(windows)
        .into_iter()
        .flat_map(|(a, b)| {
            let inner: Vec<f64> = std::iter::once(a)
                .chain(cuts.iter().copied().filter(|&c| c > a && c < b))
                .chain(std::iter::once(b))
                .collect();
            inner.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>()
        })
        .collect();
    let f = |x: f64| {
        let pt = [x];
        0.5 * (p.density(&pt).unwrap_or(0.0) - q.density(&pt).unwrap_or(0.0)).abs()
    };
    let value = integrate_intervals(&f, &pieces, 4, TV_TOLERANCE).clamp(0.0, 1.0);
    Ok(DistanceEstimate {
        kind: DistanceKind::TvQuadrature,
        value,
        standard_error: None,
    })
}

/// Quantile-coupling W₂ between two equal-size 1-d samples.
pub fn w2_empirical_1d(a: &[f64], b: &[f64]) -> Result<DistanceEstimate> {
    if a.len() != b.len() {
        return invalid(format!(
            "w2_empirical_1d needs equal counts, got {} and {}",
            a.len(),
            b.len()
        ));
    }
    if a.is_empty() {
        return invalid("w2_empirical_1d needs at least one sample");
    }
    let sorted = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        s
    };
    let (a, b) = (sorted(a), sorted(b));
    let msq = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    Ok(DistanceEstimate {
        kind: DistanceKind::W2Empirical1d,
        value: msq.sqrt(),
        standard_error: None,
    })
}

/// Exact W₂ between `N(mean_a, var_a)` and `N(mean_b, var_b)`.
pub fn w2_gaussian_exact(var_a: f64, var_b: f64, mean_a: f64, mean_b: f64) -> f64 {
    ((mean_a - mean_b).powi(2) + (var_a.sqrt() - var_b.sqrt()).powi(2)).sqrt()
}

/// `n` points `F⁻¹((i - ½)/n)`: a deterministic stand-in for a sample of `p`
/// when comparing with [`w2_empirical_1d`].
pub fn quantile_grid(p: &IsotropicGaussianMixture, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|i| p.quantile((i as f64 + 0.5) / n as f64)).collect()
}

/// `½ Σ |empirical - analytic|` over `bins` cells of equal mass under `p`.
/// The outer cells extend past the 10-sd support to catch stray samples.
pub fn tv_binned(samples: &[f64], p: &IsotropicGaussianMixture, bins: usize) -> Result<DistanceEstimate> {
    if p.dim() != 1 {
        return invalid(format!("tv_binned needs a 1-d law, got d = {}", p.dim()));
    }
    if bins < MIN_BINS {
        return invalid(format!("tv_binned needs at least {MIN_BINS} bins, got {bins}"));
    }
    if samples.is_empty() {
        return invalid("tv_binned needs at least one sample");
    }
    let edges: Vec<f64> = (1..bins)
        .map(|i| p.quantile(i as f64 / bins as f64))
        .collect::<Result<_>>()?;
    let mut counts = vec![0usize; bins];
    for &x in samples {
        counts[edges.partition_point(|&e| e < x)] += 1;
    }
    let n = samples.len() as f64;
    let value = 0.5
        * counts
            .iter()
            .map(|&c| (c as f64 / n - 1.0 / bins as f64).abs())
            .sum::<f64>();
    Ok(DistanceEstimate {
        kind: DistanceKind::TvBinned,
        value,
        standard_error: None,
    })
}

/// `(γ·m₂ + √(2γ), e^{-T}·m₂)`, with `m₂` the root second moment of `q0`.
pub fn endpoint_bounds(q0: &IsotropicGaussianMixture, gamma: f64, horizon: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&gamma) {
        return invalid(format!("gamma must lie in [0, 1), got {gamma}"));
    }
    if !(horizon >= 1.0) || !horizon.is_finite() {
        return invalid(format!("T must be >= 1, got {horizon}"));
    }
    let m2 = q0.second_moment().sqrt();
    Ok((gamma * m2 + (2.0 * gamma).sqrt(), (-horizon).exp() * m2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::normal_cdf;
    use crate::rng::substream;

    fn gauss(m: f64, v: f64) -> IsotropicGaussianMixture {
        IsotropicGaussianMixture::gaussian(vec![m], v).unwrap()
    }

    #[test]
    fn tv_identical_and_mean_shift() {
        let p = gauss(0.0, 1.0);
        assert!(tv_quadrature_1d(&p, &p).unwrap().value < 1e-8);
        let tv = tv_quadrature_1d(&p, &gauss(0.1, 1.0)).unwrap().value;
        assert!((tv - (2.0 * normal_cdf(0.05) - 1.0)).abs() < 1e-7, "{tv}");
    }

    #[test]
    fn tv_narrow_components_and_symmetry() {
        let p = IsotropicGaussianMixture::new(1, vec![(0.5, vec![-0.5], 1e-4), (0.5, vec![0.5], 1e-4)]).unwrap();
        let q = gauss(0.0, 0.3);
        let a = tv_quadrature_1d(&p, &q).unwrap().value;
        let b = tv_quadrature_1d(&q, &p).unwrap().value;
        assert!((a - b).abs() < 1e-10);
        assert!(a > 0.9 && a <= 1.0);
        // disjoint narrow laws
        assert!((tv_quadrature_1d(&gauss(0.0, 1e-6), &gauss(1.0, 1e-6)).unwrap().value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn tv_rejects_multivariate() {
        let p = IsotropicGaussianMixture::standard_normal(2);
        assert!(tv_quadrature_1d(&p, &p).is_err());
    }

    #[test]
    fn w2_empirical_basics() {
        let a = [0.3, -1.0, 2.0, 0.0];
        assert_eq!(w2_empirical_1d(&a, &a).unwrap().value, 0.0);
        let shifted: Vec<f64> = a.iter().map(|x| x + 0.75).collect();
        assert!((w2_empirical_1d(&a, &shifted).unwrap().value - 0.75).abs() < 1e-15);
        assert!(w2_empirical_1d(&a, &a[..3]).is_err());
    }

    #[test]
    fn w2_gaussian_exact_cases() {
        assert_eq!(w2_gaussian_exact(1.0, 1.0, 0.0, 0.0), 0.0);
        assert_eq!(w2_gaussian_exact(1.0, 4.0, 0.0, 0.0), 1.0);
        assert_eq!(w2_gaussian_exact(1.0, 1.0, 0.0, 3.0), 3.0);
    }

    #[test]
    fn quantile_grid_matches_gaussian_w2() {
        let a = quantile_grid(&gauss(0.0, 1.0), 20_000).unwrap();
        let b = quantile_grid(&gauss(0.0, 4.0), 20_000).unwrap();
        assert!((w2_empirical_1d(&a, &b).unwrap().value - 1.0).abs() < 1e-3);
    }

    #[test]
    fn tv_binned_degenerate_and_bins() {
        let p = gauss(0.0, 1.0);
        assert!(tv_binned(&[0.0; 10], &p, 8).is_err());
        let v = tv_binned(&[0.0; 100], &p, 64).unwrap().value;
        assert!((v - (1.0 - 1.0 / 64.0)).abs() < 1e-12);
        let mut rng = substream(1, &[0]);
        let xs: Vec<f64> = p.sample(&mut rng, 100_000).into_iter().map(|x| x[0]).collect();
        assert!(tv_binned(&xs, &p, 64).unwrap().value <= 0.02);
    }

    #[test]
    fn endpoint_bound_formulas() {
        let p = gauss(0.0, 1.0);
        let (w, tv) = endpoint_bounds(&p, 0.02, 1.0).unwrap();
        assert!((w - 0.22).abs() < 1e-12);
        assert!((tv - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(endpoint_bounds(&p, 0.0, 2.0).unwrap().0, 0.0);
        assert!(endpoint_bounds(&p, 1.0, 2.0).is_err());
        assert!(endpoint_bounds(&p, 0.1, 0.5).is_err());
    }
}

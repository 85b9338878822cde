//! Instances on which L² score estimation is hard from few samples.

use crate::error::{invalid, LabError, Result};
use crate::mixture::IsotropicGaussianMixture;
use crate::sampler::{AnalyticScore, FrozenHypothesis};

use super::NoiseChannel;

/// Variance standing in for a point mass.
pub const POINT_MASS_VAR: f64 = 1e-18;

/// `p1 = (1-η)N(0,σ²) + ηN(-R,σ²)` and its mirror `p2` (outlier at `+R`).
#[derive(Debug, Clone)]
pub struct InfoTheoreticPair {
    pub p1: IsotropicGaussianMixture,
    pub p2: IsotropicGaussianMixture,
    pub s1: FrozenHypothesis,
    pub s2: FrozenHypothesis,
    /// Unsmoothed law behind `p1`; paired samples draw `y` from it.
    pub base1: IsotropicGaussianMixture,
    pub channel: NoiseChannel,
}

pub fn build_info_theoretic_pair(eta: f64, r: f64, sigma: f64) -> Result<InfoTheoreticPair> {
    if !(eta > 0.0 && eta < 1.0) {
        return invalid(format!("eta must lie in (0, 1), got {eta}"));
    }
    if !(r > 0.0) || !r.is_finite() || !(sigma > 0.0) || !sigma.is_finite() {
        return invalid(format!("need R > 0 and sigma > 0, got R = {r}, sigma = {sigma}"));
    }
    let var = sigma * sigma;
    let law =
        |offset: f64, v: f64| IsotropicGaussianMixture::new(1, vec![(1.0 - eta, vec![0.0], v), (eta, vec![offset], v)]);
    let (p1, p2) = (law(-r, var)?, law(r, var)?);
    Ok(InfoTheoreticPair {
        s1: FrozenHypothesis::new("s1", p1.clone()),
        s2: FrozenHypothesis::new("s2", p2.clone()),
        p1,
        p2,
        base1: law(-r, POINT_MASS_VAR)?,
        channel: NoiseChannel::Additive { sigma_sq: var },
    })
}

/// `p* = N(0,σ²)` against `p̂ = ηN(0,σ²) + (1-η)N(S,σ²)`.
#[derive(Debug, Clone)]
pub struct ScoreMatchingInstance {
    pub p_star: IsotropicGaussianMixture,
    pub s_star: AnalyticScore,
    pub p_hat: IsotropicGaussianMixture,
    pub s_hat: FrozenHypothesis,
    pub log_eta: f64,
    pub base: IsotropicGaussianMixture,
    pub channel: NoiseChannel,
}

/// `ln η` for `η = S·exp(-S²/2 + 10√(ln m)·S) / (10√(ln m))`.
pub fn lower_bound_log_eta(s: f64, m: usize) -> f64 {
    let root = (m as f64).ln().sqrt();
    s.ln() - 0.5 * s * s + 10.0 * root * s - (10.0 * root).ln()
}

pub fn build_score_matching_lower_bound_instance(s: f64, m: usize, sigma: f64) -> Result<ScoreMatchingInstance> {
    if m < 2 {
        return invalid(format!("m must be >= 2, got {m}"));
    }
    if !(s > 0.0) || !s.is_finite() || !(sigma > 0.0) || !sigma.is_finite() {
        return invalid(format!("need S > 0 and sigma > 0, got S = {s}, sigma = {sigma}"));
    }
    let log_eta = lower_bound_log_eta(s, m);
    if !(log_eta < 0.0) {
        return Err(LabError::InvalidInput(format!(
            "S = {s}, m = {m} gives ln eta = {log_eta:.3}, so eta >= 1; S is not large enough for this m"
        )));
    }
    let var = sigma * sigma;
    let log_rest = (-log_eta.exp()).ln_1p();
    let p_hat =
        IsotropicGaussianMixture::from_log_weights(1, vec![(log_eta, vec![0.0], var), (log_rest, vec![s], var)])?;
    let p_star = IsotropicGaussianMixture::gaussian(vec![0.0], var)?;
    Ok(ScoreMatchingInstance {
        s_star: AnalyticScore::new(p_star.clone()),
        s_hat: FrozenHypothesis::new("s_hat", p_hat.clone()),
        base: IsotropicGaussianMixture::gaussian(vec![0.0], POINT_MASS_VAR)?,
        p_star,
        p_hat,
        log_eta,
        channel: NoiseChannel::Additive { sigma_sq: var },
    })
}

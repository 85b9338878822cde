//! Monte Carlo verifiers for high-probability bounds along the forward process.
//!
//! Each verifier draws `trials` independent statistics, takes the `(1-δ)`
//! empirical quantile and divides it by the bound with its universal constant
//! set to 1. The ratio is reported, not judged: callers apply their own
//! ceiling.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{path_on_grid, time_grid, NoiseLevel};
use crate::error::{invalid, Result};
use crate::linalg::spectral_norm_symmetric;
use crate::mixture::{norm_sq, Channel, IsotropicGaussianMixture};
use crate::rng::{label, substream, tags, Stream};
use crate::stats::upper_quantile;

/// Points on the path grid used for suprema over an interval.
pub const PATH_GRID: usize = 64;
/// Points on the grid used when comparing scores along a step.
pub const SCORE_GRID: usize = 16;
/// Largest dimension accepted by the Jacobian-based verifier.
pub const JACOBIAN_MAX_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaId {
    /// `sup_t ‖e^{t_k - t} X_{t_k} - X_t‖² ≲ h(d + log 1/δ)`
    MaxDeviation,
    /// `‖s_t(x)‖² ≲ (d + log 1/δ)/σ_t²`
    ScoreNorm,
    /// `‖J_s(x + ε)‖ ≲ (d + log 1/δ)/σ_t²`
    LocalLipschitz,
    /// `‖s_Q(x) - s_R(x)‖² ≲ (η²/σ²)(d + log 1/(ηδ))³`
    SmoothingDrift,
    /// `sup_t ‖s_{t_k}(X_{t_k}) - s_t(X_t)‖² ≲ ε/σ_{t_k}²`
    SingleStepDiscretization,
}

impl LemmaId {
    pub const ALL: [LemmaId; 5] = [
        LemmaId::MaxDeviation,
        LemmaId::ScoreNorm,
        LemmaId::LocalLipschitz,
        LemmaId::SmoothingDrift,
        LemmaId::SingleStepDiscretization,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LemmaId::MaxDeviation => "max_deviation",
            LemmaId::ScoreNorm => "score_norm",
            LemmaId::LocalLipschitz => "local_lipschitz",
            LemmaId::SmoothingDrift => "smoothing_drift",
            LemmaId::SingleStepDiscretization => "single_step_discretization",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma_id: LemmaId,
    pub trials: usize,
    pub delta: f64,
    pub empirical_quantile: f64,
    pub bound_form: f64,
    pub empirical_constant: f64,
    pub seed: u64,
}

impl LemmaReport {
    pub fn quantile_level(&self) -> f64 {
        1.0 - self.delta
    }
}

fn check_common(trials: usize, delta: f64) -> Result<()> {
    if trials == 0 {
        return invalid("verifier needs at least one trial");
    }
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must lie in (0, 1), got {delta}"));
    }
    Ok(())
}

fn run_trials<F>(id: LemmaId, trials: usize, delta: f64, seed: u64, bound_form: f64, stat: F) -> Result<LemmaReport>
where
    F: Fn(&mut Stream) -> f64 + Sync,
{
    let tag = label(id.name());
    let stats: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|i| stat(&mut substream(seed, &[tags::VERIFIER, tag, i])))
        .collect();
    let q = upper_quantile(&stats, delta)?;
    // a zero statistic (h = 0, identical scores) reports constant 0 rather than 0/0
    let constant = if q == 0.0 { 0.0 } else { q / bound_form };
    Ok(LemmaReport {
        lemma_id: id,
        trials,
        delta,
        empirical_quantile: q,
        bound_form,
        empirical_constant: constant,
        seed,
    })
}

fn dim_log(d: usize, delta: f64) -> f64 {
    d as f64 + (1.0 / delta).ln()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn score_at(q0: &IsotropicGaussianMixture, t: f64, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    q0.score_channel_into(Channel::ou(t), x, &mut out);
    out
}

/// Max deviation of the forward path from its rescaled endpoint over
/// `[t_k - h, t_k]`.
pub fn verify_max_deviation(
    q0: &IsotropicGaussianMixture,
    t_k: f64,
    h: f64,
    trials: usize,
    delta: f64,
    seed: u64,
) -> Result<LemmaReport> {
    check_common(trials, delta)?;
    if !(0.0..1.0).contains(&h) {
        return invalid(format!("window h must lie in [0, 1), got {h}"));
    }
    if h >= t_k && h > 0.0 {
        return invalid(format!("window h = {h} must be below t_k = {t_k}"));
    }
    let bound = h * dim_log(q0.dim(), delta);
    if h == 0.0 {
        return run_trials(LemmaId::MaxDeviation, trials, delta, seed, bound, |_| 0.0);
    }
    let grid = time_grid(t_k - h, t_k, PATH_GRID - 1);
    run_trials(LemmaId::MaxDeviation, trials, delta, seed, bound, |rng| {
        let states = path_on_grid(q0, &grid, rng);
        let end = states.last().expect("non-empty path");
        grid.iter()
            .zip(&states)
            .map(|(t, x)| {
                let scale = (t_k - t).exp();
                end.iter().zip(x).map(|(e, xi)| (scale * e - xi).powi(2)).sum::<f64>()
            })
            .fold(0.0, f64::max)
    })
}

/// Squared score norm at `x ~ q_t`.
pub fn verify_score_norm_subgaussian(
    q0: &IsotropicGaussianMixture,
    t: f64,
    trials: usize,
    delta: f64,
    seed: u64,
) -> Result<LemmaReport> {
    check_common(trials, delta)?;
    let level = positive_time(t)?;
    let qt = q0.smooth(t)?;
    let bound = dim_log(q0.dim(), delta) / level.sigma_sq;
    run_trials(LemmaId::ScoreNorm, trials, delta, seed, bound, |rng| {
        let x = qt.sample_one(rng);
        norm_sq(&score_at(q0, t, &x))
    })
}

/// Spectral norm of the score Jacobian at a perturbed draw `x + ε`, `x ~ q_t`,
/// with `ε` uniform in the ball of radius `radius_scale·σ_t/√(d + log 1/δ)`.
pub fn verify_local_lipschitz(
    q0: &IsotropicGaussianMixture,
    t: f64,
    radius_scale: f64,
    trials: usize,
    delta: f64,
    seed: u64,
) -> Result<LemmaReport> {
    check_common(trials, delta)?;
    let level = positive_time(t)?;
    let d = q0.dim();
    if d > JACOBIAN_MAX_DIM {
        return invalid(format!("Jacobian verifier supports d <= {JACOBIAN_MAX_DIM}, got {d}"));
    }
    if !(radius_scale >= 0.0) || !radius_scale.is_finite() {
        return invalid(format!("radius_scale must be finite and >= 0, got {radius_scale}"));
    }
    let qt = q0.smooth(t)?;
    let radius = radius_scale * level.sigma() / dim_log(d, delta).sqrt();
    let bound = dim_log(d, delta) / level.sigma_sq;
    run_trials(LemmaId::LocalLipschitz, trials, delta, seed, bound, |rng| {
        let mut x = qt.sample_one(rng);
        let eps = uniform_in_ball(d, radius, rng);
        x.iter_mut().zip(&eps).for_each(|(xi, e)| *xi += e);
        spectral_norm_symmetric(&q0.score_jacobian_channel(Channel::ou(t), &x))
    })
}

/// Score drift when the smoothing level drops from `σ_{t_k}` to
/// `(1 - η)σ_{t_k}` (the OU time with that noise level).
pub fn verify_smoothing_drift(
    q0: &IsotropicGaussianMixture,
    t_k: f64,
    eta: f64,
    trials: usize,
    delta: f64,
    seed: u64,
) -> Result<LemmaReport> {
    check_common(trials, delta)?;
    if !(eta > 0.0 && eta < 1.0) {
        return invalid(format!("eta must lie in (0, 1), got {eta}"));
    }
    let level = positive_time(t_k)?;
    let reduced = NoiseLevel::from_sigma_sq((1.0 - eta).powi(2) * level.sigma_sq)?;
    let qt = q0.smooth(t_k)?;
    let d = q0.dim() as f64;
    let bound = eta * eta / level.sigma_sq * (d + (1.0 / (eta * delta)).ln()).powi(3);
    run_trials(LemmaId::SmoothingDrift, trials, delta, seed, bound, |rng| {
        let x = qt.sample_one(rng);
        sq_dist(&score_at(q0, t_k, &x), &score_at(q0, reduced.t, &x))
    })
}

/// Step size used by [`verify_single_step_discretization`]:
/// `h = ε(1 - e^{-2t_k})/(d + log 1/δ)³`.
pub fn single_step_size(d: usize, t_k: f64, epsilon: f64, delta: f64) -> f64 {
    epsilon * -(-2.0 * t_k).exp_m1() / dim_log(d, delta).powi(3)
}

/// Max over a step of `‖s_{t_k}(X_{t_k}) - s_t(X_t)‖²` along coupled forward
/// paths.
pub fn verify_single_step_discretization(
    q0: &IsotropicGaussianMixture,
    t_k: f64,
    epsilon: f64,
    trials: usize,
    delta: f64,
    seed: u64,
) -> Result<LemmaReport> {
    check_common(trials, delta)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return invalid(format!("epsilon must lie in (0, 1), got {epsilon}"));
    }
    let level = positive_time(t_k)?;
    let h = single_step_size(q0.dim(), t_k, epsilon, delta);
    if h < 1e-12 {
        return invalid(format!("step size {h:e} underflows (< 1e-12)"));
    }
    if t_k - h < 0.0 {
        return invalid(format!("step {h} exceeds t_k = {t_k}"));
    }
    let grid = time_grid(t_k - h, t_k, SCORE_GRID - 1);
    let bound = epsilon / level.sigma_sq;
    run_trials(LemmaId::SingleStepDiscretization, trials, delta, seed, bound, |rng| {
        let states = path_on_grid(q0, &grid, rng);
        let end = states.last().expect("non-empty path");
        let s_end = score_at(q0, t_k, end);
        grid.iter()
            .zip(&states)
            .map(|(t, x)| sq_dist(&s_end, &score_at(q0, *t, x)))
            .fold(0.0, f64::max)
    })
}

fn positive_time(t: f64) -> Result<NoiseLevel> {
    if !(t > 0.0) {
        return invalid(format!("time must be > 0, got {t}"));
    }
    NoiseLevel::at(t)
}

fn uniform_in_ball<R: Rng + ?Sized>(d: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = norm_sq(&v).sqrt();
    let r = radius * rng.gen::<f64>().powf(1.0 / d as f64);
    v.iter_mut().for_each(|x| *x *= r / norm);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_gaussian() -> IsotropicGaussianMixture {
        IsotropicGaussianMixture::new(1, vec![(0.5, vec![-0.5], 1e-4), (0.5, vec![0.5], 1e-4)]).unwrap()
    }

    #[test]
    fn zero_window_has_zero_deviation() {
        let r = verify_max_deviation(&IsotropicGaussianMixture::standard_normal(1), 0.5, 0.0, 50, 0.1, 1).unwrap();
        assert_eq!(r.empirical_quantile, 0.0);
        assert_eq!(r.empirical_constant, 0.0);
    }

    #[test]
    fn max_deviation_input_errors() {
        let g = IsotropicGaussianMixture::standard_normal(1);
        assert!(verify_max_deviation(&g, 0.5, 0.5, 10, 0.1, 1).is_err());
        assert!(verify_max_deviation(&g, 3.0, 1.0, 10, 0.1, 1).is_err());
        assert!(verify_max_deviation(&g, 0.5, 0.1, 0, 0.1, 1).is_err());
        assert!(verify_max_deviation(&g, 0.5, 0.1, 10, 1.5, 1).is_err());
    }

    #[test]
    fn max_deviation_stationary_constant() {
        let g = IsotropicGaussianMixture::standard_normal(1);
        let r = verify_max_deviation(&g, 1.0, 0.01, 4000, 0.1, 3).unwrap();
        assert!(r.empirical_constant > 0.0 && r.empirical_constant <= 10.0, "{r:?}");
    }

    #[test]
    fn max_deviation_scales_linearly_in_h() {
        let g = IsotropicGaussianMixture::standard_normal(1);
        let a = verify_max_deviation(&g, 1.0, 0.01, 4000, 0.1, 4).unwrap();
        let b = verify_max_deviation(&g, 1.0, 0.02, 4000, 0.1, 4).unwrap();
        let ratio = b.empirical_quantile / a.empirical_quantile;
        assert!((1.3..=3.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn gaussian_lipschitz_is_exact() {
        let g = IsotropicGaussianMixture::standard_normal(1);
        let r = verify_local_lipschitz(&g, 0.7, 1.0, 200, 0.1, 5).unwrap();
        assert!((r.empirical_quantile - 1.0).abs() < 1e-12);
        let want = (1.0 - (-1.4f64).exp()) / (1.0 + 10f64.ln());
        assert!((r.empirical_constant - want).abs() < 1e-12);
        assert!(r.empirical_constant <= 1.0);
    }

    #[test]
    fn lipschitz_two_gaussian_constants() {
        let g = two_gaussian();
        let late = verify_local_lipschitz(&g, 1.0, 1.0, 2000, 0.1, 6).unwrap();
        let early = verify_local_lipschitz(&g, 0.001, 1.0, 2000, 0.1, 6).unwrap();
        assert!(late.empirical_constant <= 10.0);
        assert!(early.bound_form > 100.0 * late.bound_form);
        let ratio = early.empirical_constant / late.empirical_constant;
        assert!((0.1..=10.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn lipschitz_dimension_cap() {
        let g = IsotropicGaussianMixture::standard_normal(17);
        assert!(verify_local_lipschitz(&g, 1.0, 1.0, 10, 0.1, 1).is_err());
    }

    #[test]
    fn stationary_smoothing_drift_vanishes() {
        let g = IsotropicGaussianMixture::standard_normal(2);
        for eta in [0.01, 0.3] {
            let r = verify_smoothing_drift(&g, 0.5, eta, 200, 0.1, 2).unwrap();
            assert!(r.empirical_quantile < 1e-20);
        }
    }

    #[test]
    fn smoothing_drift_shrinks_with_eta() {
        let g = two_gaussian();
        let big = verify_smoothing_drift(&g, 0.5, 0.01, 1000, 0.1, 8).unwrap();
        let small = verify_smoothing_drift(&g, 0.5, 1e-5, 1000, 0.1, 8).unwrap();
        assert!(small.empirical_quantile < 1e-4 * big.empirical_quantile);
        assert!(big.empirical_constant <= 10.0);
        assert!(verify_smoothing_drift(&g, 0.5, 0.0, 10, 0.1, 1).is_err());
        assert!(verify_smoothing_drift(&g, 0.5, 1.0, 10, 0.1, 1).is_err());
    }

    #[test]
    fn single_step_rejects_underflow_and_bad_eps() {
        let g = IsotropicGaussianMixture::standard_normal(1);
        assert!(verify_single_step_discretization(&g, 1e-14, 0.5, 10, 0.1, 1).is_err());
        assert!(verify_single_step_discretization(&g, 1.0, 1.0, 10, 0.1, 1).is_err());
    }

    #[test]
    fn single_step_stationary_reduces_to_deviation() {
        // with scores −x the statistic is max ‖X_{t_k} − X_t‖², which is
        // below the rescaled deviation plus the (1 − e^{−Δ}) drift term
        let g = IsotropicGaussianMixture::standard_normal(1);
        let r = verify_single_step_discretization(&g, 1.0, 0.25, 2000, 0.1, 9).unwrap();
        let h = single_step_size(1, 1.0, 0.25, 0.1);
        assert!(r.empirical_quantile < 20.0 * h);
        assert!(r.empirical_constant <= 10.0);
    }

    #[test]
    fn reports_are_reproducible() {
        let g = two_gaussian();
        let a = verify_score_norm_subgaussian(&g, 0.2, 500, 0.1, 42).unwrap();
        let b = verify_score_norm_subgaussian(&g, 0.2, 500, 0.1, 42).unwrap();
        assert_eq!(a.empirical_quantile.to_bits(), b.empirical_quantile.to_bits());
        let json = serde_json::to_value(&a).unwrap();
        let mut keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "bound_form",
                "delta",
                "empirical_constant",
                "empirical_quantile",
                "lemma_id",
                "seed",
                "trials"
            ]
        );
    }
}

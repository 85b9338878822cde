//! The forward Ornstein-Uhlenbeck process `dx = -x dt + √2 dB`.
//!
//! Marginals are sampled exactly (`x_t = e^{-t}x_0 + σ_t ξ`) and paths use the
//! exact transition kernel between grid points, never Euler steps.

mod verify;

pub use verify::{
    single_step_size, verify_local_lipschitz, verify_max_deviation, verify_score_norm_subgaussian,
    verify_single_step_discretization, verify_smoothing_drift, LemmaId, LemmaReport, JACOBIAN_MAX_DIM, PATH_GRID,
    SCORE_GRID,
};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mixture::IsotropicGaussianMixture;
use crate::rng::{substream, tags, Stream};

/// A time together with its noise variance `σ_t² = 1 - e^{-2t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub t: f64,
    pub sigma_sq: f64,
}

impl NoiseLevel {
    pub fn at(t: f64) -> Result<Self> {
        if !(t >= 0.0) || !t.is_finite() {
            return invalid(format!("time must be finite and >= 0, got {t}"));
        }
        Ok(Self {
            t,
            sigma_sq: -(-2.0 * t).exp_m1(),
        })
    }

    /// The time whose noise variance is `sigma_sq`, for `sigma_sq ∈ [0, 1)`.
    pub fn from_sigma_sq(sigma_sq: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&sigma_sq) {
            return invalid(format!("noise variance must lie in [0, 1), got {sigma_sq}"));
        }
        Ok(Self {
            t: -0.5 * (-sigma_sq).ln_1p(),
            sigma_sq,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_sq.sqrt()
    }
}

/// One forward path on a fixed time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardPath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Advance `x` by the exact OU transition over `dt`.
pub fn ou_transition<R: Rng + ?Sized>(x: &mut [f64], dt: f64, rng: &mut R) {
    let decay = (-dt).exp();
    let sd = (-(-2.0 * dt).exp_m1()).sqrt();
    for xi in x.iter_mut() {
        *xi = decay * *xi + sd * rng.sample::<f64, _>(StandardNormal);
    }
}

/// Draw `x_0 ~ q0` and push it through the OU channel to time `t`.
pub fn forward_marginal_draw<R: Rng + ?Sized>(q0: &IsotropicGaussianMixture, t: f64, rng: &mut R) -> Vec<f64> {
    let mut x = q0.sample_one(rng);
    ou_transition(&mut x, t, rng);
    x
}

/// `n` independent draws from `q_t`, each on its own substream of `seed`.
pub fn forward_marginal_sample(q0: &IsotropicGaussianMixture, t: f64, seed: u64, n: usize) -> Result<Vec<Vec<f64>>> {
    NoiseLevel::at(t)?;
    Ok((0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, &[tags::FORWARD_MARGINAL, i]);
            forward_marginal_draw(q0, t, &mut rng)
        })
        .collect())
}

/// Uniform grid of `steps + 1` times over `[lo, hi]`.
pub fn time_grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|i| {
            if i == steps {
                hi
            } else {
                lo + (hi - lo) * i as f64 / steps as f64
            }
        })
        .collect()
}

/// Simulate `x` on `grid` (increasing) starting from `x_{grid[0]} ~ q_{grid[0]}`.
pub(crate) fn path_on_grid(q0: &IsotropicGaussianMixture, grid: &[f64], rng: &mut Stream) -> Vec<Vec<f64>> {
    let mut x = forward_marginal_draw(q0, grid[0], rng);
    let mut states = Vec::with_capacity(grid.len());
    states.push(x.clone());
    for w in grid.windows(2) {
        ou_transition(&mut x, w[1] - w[0], rng);
        states.push(x.clone());
    }
    states
}

pub fn simulate_forward_path(
    q0: &IsotropicGaussianMixture,
    t_lo: f64,
    t_hi: f64,
    grid_steps: usize,
    seed: u64,
) -> Result<ForwardPath> {
    if !(t_lo >= 0.0 && t_lo < t_hi) || !t_hi.is_finite() {
        return invalid(format!("need 0 <= t_lo < t_hi, got [{t_lo}, {t_hi}]"));
    }
    if grid_steps == 0 {
        return invalid("grid_steps must be >= 1");
    }
    let times = time_grid(t_lo, t_hi, grid_steps);
    let mut rng = substream(seed, &[tags::FORWARD_PATH]);
    let states = path_on_grid(q0, &times, &mut rng);
    Ok(ForwardPath { times, states, seed })
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{forward_marginal_draw, ou_transition};
use crate::error::{invalid, Result};
use crate::mixture::{Channel, IsotropicGaussianMixture};
use crate::rng::{substream, tags};
use crate::sampler::ScoreModel;
use crate::schedule::Schedule;
use crate::stats::mean_and_se;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalEstimate {
    pub value: f64,
    pub standard_error: f64,
}

/// `Σ_k h_k · E_{x~q_{t_k}} ‖s_{t_k}(x) - ŝ(t_k, x)‖²`, with `n_paths` fresh
/// draws per schedule time.
pub fn girsanov_kl_functional<M: ScoreModel + ?Sized>(
    schedule: &Schedule,
    model: &M,
    q0: &IsotropicGaussianMixture,
    n_paths: usize,
    seed: u64,
) -> Result<f64> {
    schedule.validate()?;
    if n_paths == 0 {
        return invalid("n_paths must be >= 1");
    }
    let per_step: Vec<f64> = schedule
        .iter_steps()
        .enumerate()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(k, (t, h))| {
            let mut truth = vec![0.0; q0.dim()];
            let mut acc = 0.0;
            for i in 0..n_paths as u64 {
                let mut rng = substream(seed, &[tags::GIRSANOV, k as u64, i]);
                let x = forward_marginal_draw(q0, t, &mut rng);
                q0.score_channel_into(Channel::ou(t), &x, &mut truth);
                let est = model.evaluate(t, &x);
                acc += truth.iter().zip(&est).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            }
            h * acc / n_paths as f64
        })
        .collect();
    Ok(per_step.iter().sum())
}

/// Pathwise discretization functional
/// `Σ_k ∫_{t_{k+1}}^{t_k} ‖s_{t_k}(X_{t_k}) - s_u(X_u)‖² du` along exact forward
/// paths, each interval resolved by `substeps` trapezoid panels.
pub fn discretization_functional(
    q0: &IsotropicGaussianMixture,
    schedule: &Schedule,
    n_paths: usize,
    substeps: usize,
    seed: u64,
) -> Result<FunctionalEstimate> {
    schedule.validate()?;
    if n_paths < 2 || substeps == 0 {
        return invalid("need n_paths >= 2 and substeps >= 1");
    }
    if schedule.terminal_time() <= 0.0 {
        return invalid("discretization functional needs a positive terminal time");
    }
    // ascending grid; interval k (forward order) spans grid[k*J..=(k+1)*J]
    let ascending: Vec<f64> = schedule.times.iter().rev().copied().collect();
    let mut grid = vec![ascending[0]];
    for w in ascending.windows(2) {
        for j in 1..=substeps {
            grid.push(if j == substeps {
                w[1]
            } else {
                w[0] + (w[1] - w[0]) * j as f64 / substeps as f64
            });
        }
    }
    let d = q0.dim();
    let totals: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, &[tags::GIRSANOV, u64::MAX, i]);
            let mut x = forward_marginal_draw(q0, grid[0], &mut rng);
            let mut scores = vec![vec![0.0; d]; substeps + 1];
            q0.score_channel_into(Channel::ou(grid[0]), &x, &mut scores[0]);
            let mut total = 0.0;
            for k in 0..ascending.len() - 1 {
                let base = k * substeps;
                if k > 0 {
                    scores.swap(0, substeps);
                }
                for j in 1..=substeps {
                    let (lo, hi) = (grid[base + j - 1], grid[base + j]);
                    ou_transition(&mut x, hi - lo, &mut rng);
                    q0.score_channel_into(Channel::ou(hi), &x, &mut scores[j]);
                }
                let anchor = &scores[substeps];
                let gap = |j: usize| -> f64 { anchor.iter().zip(&scores[j]).map(|(a, b)| (a - b).powi(2)).sum() };
                for j in 1..=substeps {
                    let du = grid[base + j] - grid[base + j - 1];
                    total += 0.5 * du * (gap(j - 1) + gap(j));
                }
            }
            total
        })
        .collect();
    let (value, standard_error) = mean_and_se(&totals);
    Ok(FunctionalEstimate { value, standard_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{AnalyticScore, CorruptedScore, Perturbation};
    use crate::schedule::noise_var;

    fn q0() -> IsotropicGaussianMixture {
        IsotropicGaussianMixture::new(1, vec![(0.5, vec![-0.5], 1e-4), (0.5, vec![0.5], 1e-4)]).unwrap()
    }

    #[test]
    fn analytic_model_gives_zero() {
        let s = Schedule::adaptive(2.0, 0.01, 40).unwrap();
        assert_eq!(
            girsanov_kl_functional(&s, &AnalyticScore::new(q0()), &q0(), 20, 1).unwrap(),
            0.0
        );
    }

    #[test]
    fn constant_bias_integrates() {
        let s = Schedule::adaptive(2.0, 0.01, 40).unwrap();
        let m = CorruptedScore::new(AnalyticScore::new(q0()), Perturbation::Bias { bias: 0.3 });
        let v = girsanov_kl_functional(&s, &m, &q0(), 10, 1).unwrap();
        let want = 0.09 * (s.horizon - s.terminal_time());
        assert!((v - want).abs() < 1e-12, "{v} vs {want}");
    }

    #[test]
    fn low_noise_error_matches_direct_sum() {
        let s = Schedule::adaptive(2.0, 0.001, 60).unwrap();
        let m = CorruptedScore::new(
            AnalyticScore::new(q0()),
            Perturbation::LowNoiseBias { below: 0.1, scale: 1.0 },
        );
        let v = girsanov_kl_functional(&s, &m, &q0(), 5, 2).unwrap();
        let direct: f64 = s
            .iter_steps()
            .filter(|(t, _)| *t < 0.1)
            .map(|(t, h)| h / noise_var(t))
            .sum();
        assert!((v - direct).abs() < 1e-9 * direct);
        let rate = (2.0 + 1000f64.ln()) / 60.0;
        let count = s.iter_steps().filter(|(t, _)| *t < 0.1).count() as f64;
        assert!((direct - rate * count).abs() < 1e-9 * direct);
    }

    #[test]
    fn discretization_functional_shrinks_with_n() {
        let coarse = Schedule::adaptive(2.0, 0.01, 50).unwrap();
        let fine = Schedule::adaptive(2.0, 0.01, 200).unwrap();
        let a = discretization_functional(&q0(), &coarse, 400, 8, 3).unwrap();
        let b = discretization_functional(&q0(), &fine, 400, 8, 3).unwrap();
        assert!(a.value > 2.0 * b.value, "{a:?} {b:?}");
        assert!(b.value > 0.0 && b.standard_error > 0.0);
    }

    #[test]
    fn discretization_functional_is_reproducible() {
        let s = Schedule::adaptive(1.0, 0.05, 20).unwrap();
        let a = discretization_functional(&q0(), &s, 50, 4, 9).unwrap();
        let b = discretization_functional(&q0(), &s, 50, 4, 9).unwrap();
        assert_eq!(a, b);
    }
}

//! Score matching on paired samples, finite-class ERM and error metrics.
//!
//! A paired sample stores the clean draw `y`, the injected noise `z` and the
//! noisy point `x = scale·y + z`. The regression target of score matching is
//! `-z/σ²`, whose conditional mean given `x` is the true score.

mod girsanov;
mod hardness;

use std::collections::HashSet;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::mixture::{norm_sq, IsotropicGaussianMixture};
use crate::sampler::ScoreModel;
use crate::schedule::noise_var;
use crate::stats::upper_quantile;

pub use girsanov::{discretization_functional, girsanov_kl_functional, FunctionalEstimate};
pub use hardness::{
    build_info_theoretic_pair, build_score_matching_lower_bound_instance, lower_bound_log_eta, InfoTheoreticPair,
    ScoreMatchingInstance, POINT_MASS_VAR,
};

/// How `x` is produced from `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseChannel {
    /// The forward OU marginal at time `t`: `x = e^{-t}y + z`, `z ~ N(0, σ_t² I)`.
    Ou { t: f64 },
    /// `x = y + z` with `z ~ N(0, sigma_sq I)`. Scores are evaluated at time 0,
    /// i.e. the hypotheses are scores of already-smoothed laws.
    Additive { sigma_sq: f64 },
}

impl NoiseChannel {
    pub fn scale(&self) -> f64 {
        match *self {
            NoiseChannel::Ou { t } => (-t).exp(),
            NoiseChannel::Additive { .. } => 1.0,
        }
    }

    pub fn noise_var(&self) -> f64 {
        match *self {
            NoiseChannel::Ou { t } => noise_var(t),
            NoiseChannel::Additive { sigma_sq } => sigma_sq,
        }
    }

    /// Time argument passed to score models.
    pub fn eval_time(&self) -> f64 {
        match *self {
            NoiseChannel::Ou { t } => t,
            NoiseChannel::Additive { .. } => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = self.noise_var();
        if !(v > 0.0) || !v.is_finite() {
            return invalid(format!("noise channel {self:?} has no positive noise variance"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    pub channel: NoiseChannel,
}

impl PairedSample {
    /// The score-matching target `-z/σ²`.
    pub fn target(&self) -> Vec<f64> {
        let v = self.channel.noise_var();
        self.z.iter().map(|z| -z / v).collect()
    }
}

/// Draw `m` paired samples with `y ~ q0`.
pub fn draw_paired_batch<R: Rng + ?Sized>(
    q0: &IsotropicGaussianMixture,
    channel: NoiseChannel,
    m: usize,
    rng: &mut R,
) -> Result<Vec<PairedSample>> {
    channel.validate()?;
    let (scale, sd) = (channel.scale(), channel.noise_var().sqrt());
    Ok((0..m)
        .map(|_| {
            let y = q0.sample_one(rng);
            let z: Vec<f64> = (0..y.len())
                .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let x = y.iter().zip(&z).map(|(y, z)| scale * y + z).collect();
            PairedSample { y, z, x, channel }
        })
        .collect())
}

fn batch_channel(batch: &[PairedSample]) -> Result<NoiseChannel> {
    let first = batch
        .first()
        .ok_or_else(|| LabError::InvalidInput("empty batch".into()))?
        .channel;
    if batch.iter().any(|s| s.channel != first) {
        return invalid("batch mixes noise levels");
    }
    Ok(first)
}

/// `(1/m) Σ ‖ŝ(x_i) + z_i/σ²‖²`.
pub fn score_matching_loss<M: ScoreModel + ?Sized>(model: &M, batch: &[PairedSample]) -> Result<f64> {
    let channel = batch_channel(batch)?;
    let (t, v) = (channel.eval_time(), channel.noise_var());
    let total: f64 = batch
        .iter()
        .map(|s| {
            let pred = model.evaluate(t, &s.x);
            pred.iter().zip(&s.z).map(|(p, z)| (p + z / v).powi(2)).sum::<f64>()
        })
        .sum();
    Ok(total / batch.len() as f64)
}

/// Excess loss `‖s - s*‖² + 2⟨s - s*, Δ⟩` with `Δ = s*(x) + z/σ²`.
/// Equals the per-sample loss difference of `model` over `true_score`.
pub fn l_prime<M: ScoreModel + ?Sized, N: ScoreModel + ?Sized>(
    model: &M,
    true_score: &N,
    sample: &PairedSample,
) -> f64 {
    let (t, v) = (sample.channel.eval_time(), sample.channel.noise_var());
    let s = model.evaluate(t, &sample.x);
    let s_star = true_score.evaluate(t, &sample.x);
    s.iter()
        .zip(&s_star)
        .zip(&sample.z)
        .map(|((s, ss), z)| {
            let d = s - ss;
            d * d + 2.0 * d * (ss + z / v)
        })
        .sum()
}

/// A finite, labelled set of candidate scores for one noise channel.
#[derive(Clone)]
pub struct HypothesisClass {
    members: Vec<(String, Arc<dyn ScoreModel>)>,
    channel: NoiseChannel,
}

impl HypothesisClass {
    pub fn new(members: Vec<(String, Arc<dyn ScoreModel>)>, channel: NoiseChannel) -> Result<Self> {
        if members.is_empty() {
            return invalid("hypothesis class must be non-empty");
        }
        let mut seen = HashSet::new();
        if let Some((dup, _)) = members.iter().find(|(l, _)| !seen.insert(l.as_str())) {
            return invalid(format!("duplicate hypothesis label {dup:?}"));
        }
        channel.validate()?;
        Ok(Self { members, channel })
    }

    pub fn channel(&self) -> NoiseChannel {
        self.channel
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(|(l, _)| l.as_str())
    }

    pub fn get(&self, label: &str) -> Option<&Arc<dyn ScoreModel>> {
        self.members.iter().find(|(l, _)| l == label).map(|(_, m)| m)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossEntry {
    pub label: String,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErmOutcome {
    pub selected: String,
    pub losses: Vec<LossEntry>,
}

impl ErmOutcome {
    pub fn loss_of(&self, label: &str) -> Option<f64> {
        self.losses.iter().find(|e| e.label == label).map(|e| e.loss)
    }
}

/// Empirical risk minimizer over `class`. Ties go to the lexicographically
/// smallest label.
pub fn erm(class: &HypothesisClass, batch: &[PairedSample]) -> Result<ErmOutcome> {
    let channel = batch_channel(batch)?;
    if channel != class.channel {
        return invalid(format!(
            "batch channel {channel:?} differs from class channel {:?}",
            class.channel
        ));
    }
    let losses = class
        .members
        .par_iter()
        .map(|(label, m)| {
            Ok(LossEntry {
                label: label.clone(),
                loss: score_matching_loss(m.as_ref(), batch)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = losses
        .iter()
        .min_by(|a, b| a.loss.total_cmp(&b.loss).then_with(|| a.label.cmp(&b.label)))
        .expect("class is non-empty");
    Ok(ErmOutcome {
        selected: best.label.clone(),
        losses,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub l2_sq: f64,
    pub quantile_eps: f64,
    pub delta: f64,
    pub n_eval: usize,
}

/// Smallest sample size for which the `(1-δ)` quantile is resolved.
pub fn min_eval_count(delta: f64) -> usize {
    (10.0 / delta).ceil() as usize
}

/// Compare `f` and `g` at time `t` on `n_eval` draws from `p`: mean of
/// `‖f-g‖²` and the `(1-δ)` empirical quantile of `‖f-g‖`.
pub fn error_report<F, G, R>(
    f: &F,
    g: &G,
    p: &IsotropicGaussianMixture,
    t: f64,
    delta: f64,
    n_eval: usize,
    rng: &mut R,
) -> Result<ErrorReport>
where
    F: ScoreModel + ?Sized,
    G: ScoreModel + ?Sized,
    R: Rng + ?Sized,
{
    if !(delta > 0.0 && delta <= 1.0) {
        return invalid(format!("delta must lie in (0, 1], got {delta}"));
    }
    if n_eval < min_eval_count(delta) {
        return invalid(format!(
            "n_eval = {n_eval} is below ceil(10/delta) = {} needed for the quantile",
            min_eval_count(delta)
        ));
    }
    let xs = p.sample(rng, n_eval);
    let dist_sq: Vec<f64> = xs
        .par_iter()
        .map(|x| {
            let (a, b) = (f.evaluate(t, x), g.evaluate(t, x));
            a.iter().zip(&b).map(|(a, b)| (a - b).powi(2)).sum()
        })
        .collect();
    let l2_sq = dist_sq.iter().sum::<f64>() / n_eval as f64;
    let norms: Vec<f64> = dist_sq.iter().map(|d| d.sqrt()).collect();
    Ok(ErrorReport {
        l2_sq,
        quantile_eps: upper_quantile(&norms, delta)?,
        delta,
        n_eval,
    })
}

/// CSV with columns `y_i…, z_i…, x_i…, t, noise_var`.
pub fn write_batch_csv<W: Write>(batch: &[PairedSample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = batch.first().map_or(0, |s| s.x.len());
    let header = ["y", "z", "x"]
        .iter()
        .flat_map(|p| (0..d).map(move |i| format!("{p}_{i}")))
        .chain(["t".to_string(), "noise_var".to_string()]);
    w.write_record(header)?;
    for s in batch {
        let tail = [s.channel.eval_time(), s.channel.noise_var()];
        let row = s.y.iter().chain(&s.z).chain(&s.x).chain(&tail).map(|v| v.to_string());
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean of `‖x - e^{-t}y - z‖²` over the batch; zero for well-formed samples.
pub fn pairing_defect(batch: &[PairedSample]) -> f64 {
    batch
        .iter()
        .map(|s| {
            let c = s.channel.scale();
            let r: Vec<f64> =
                s.x.iter()
                    .zip(&s.y)
                    .zip(&s.z)
                    .map(|((x, y), z)| x - c * y - z)
                    .collect();
            norm_sq(&r)
        })
        .sum::<f64>()
        / batch.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::sampler::{AnalyticScore, CorruptedScore, FrozenHypothesis, Perturbation};

    fn q0() -> IsotropicGaussianMixture {
        IsotropicGaussianMixture::new(1, vec![(0.3, vec![-1.0], 0.2), (0.7, vec![2.0], 0.5)]).unwrap()
    }

    fn arc<M: ScoreModel + 'static>(m: M) -> Arc<dyn ScoreModel> {
        Arc::new(m)
    }

    #[test]
    fn batch_pairing_holds() {
        let mut rng = substream(1, &[0]);
        let b = draw_paired_batch(&q0(), NoiseChannel::Ou { t: 0.4 }, 200, &mut rng).unwrap();
        assert!(pairing_defect(&b) < 1e-28);
        assert!(draw_paired_batch(&q0(), NoiseChannel::Ou { t: 0.0 }, 2, &mut rng).is_err());
    }

    #[test]
    fn mixed_channels_rejected() {
        let mut rng = substream(2, &[0]);
        let mut b = draw_paired_batch(&q0(), NoiseChannel::Ou { t: 0.4 }, 3, &mut rng).unwrap();
        b[1].channel = NoiseChannel::Ou { t: 0.5 };
        let m = AnalyticScore::new(q0());
        assert!(score_matching_loss(&m, &b).is_err());
        assert!(score_matching_loss(&m, &[]).is_err());
    }

    #[test]
    fn l_prime_identity_and_zero() {
        let mut rng = substream(3, &[0]);
        let ch = NoiseChannel::Ou { t: 0.3 };
        let b = draw_paired_batch(&q0(), ch, 1000, &mut rng).unwrap();
        let truth = AnalyticScore::new(q0());
        let other = CorruptedScore::new(truth.clone(), Perturbation::Bias { bias: 0.4 });
        for s in &b {
            assert_eq!(l_prime(&truth, &truth, s), 0.0);
            let direct = score_matching_loss(&other, std::slice::from_ref(s)).unwrap()
                - score_matching_loss(&truth, std::slice::from_ref(s)).unwrap();
            assert!((l_prime(&other, &truth, s) - direct).abs() < 1e-10 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn class_validation() {
        let ch = NoiseChannel::Ou { t: 0.3 };
        assert!(HypothesisClass::new(vec![], ch).is_err());
        let a = arc(AnalyticScore::new(q0()));
        assert!(HypothesisClass::new(vec![("a".into(), a.clone()), ("a".into(), a)], ch).is_err());
    }

    #[test]
    fn erm_prefers_truth_and_breaks_ties_lexicographically() {
        let ch = NoiseChannel::Ou { t: 0.3 };
        let truth = AnalyticScore::new(q0());
        let biased = CorruptedScore::new(truth.clone(), Perturbation::Bias { bias: 10.0 });
        let class = HypothesisClass::new(
            vec![("z_true".into(), arc(truth.clone())), ("a_bias".into(), arc(biased))],
            ch,
        )
        .unwrap();
        let mut rng = substream(4, &[0]);
        let b = draw_paired_batch(&q0(), ch, 100, &mut rng).unwrap();
        let out = erm(&class, &b).unwrap();
        assert_eq!(out.selected, "z_true");
        let min = out.losses.iter().map(|e| e.loss).fold(f64::INFINITY, f64::min);
        assert_eq!(out.loss_of("z_true"), Some(min));

        let tie = HypothesisClass::new(vec![("b".into(), arc(truth.clone())), ("a".into(), arc(truth))], ch).unwrap();
        assert_eq!(erm(&tie, &b).unwrap().selected, "a");
        assert!(erm(&tie, &[]).is_err());
        let other = draw_paired_batch(&q0(), NoiseChannel::Ou { t: 0.5 }, 3, &mut rng).unwrap();
        assert!(erm(&tie, &other).is_err());
    }

    #[test]
    fn error_report_basics() {
        let f = FrozenHypothesis::new("f", q0());
        let mut rng = substream(5, &[0]);
        let r = error_report(&f, &f, &q0(), 0.0, 0.01, 1000, &mut rng).unwrap();
        assert_eq!((r.l2_sq, r.quantile_eps), (0.0, 0.0));
        assert!(error_report(&f, &f, &q0(), 0.0, 0.01, 999, &mut rng).is_err());
        assert!(error_report(&f, &f, &q0(), 0.0, 0.0, 10_000, &mut rng).is_err());

        let g = FrozenHypothesis::new("g", IsotropicGaussianMixture::standard_normal(1));
        let full = error_report(&f, &g, &q0(), 0.0, 1.0, 50, &mut substream(6, &[0])).unwrap();
        // δ = 1 is the minimum over the same draws
        let xs = q0().sample(&mut substream(6, &[0]), 50);
        let min = xs
            .iter()
            .map(|x| (f.evaluate(0.0, x)[0] - g.evaluate(0.0, x)[0]).abs())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(full.quantile_eps, min);
    }

    #[test]
    fn batch_csv_layout() {
        let mut rng = substream(7, &[0]);
        let b = draw_paired_batch(
            &IsotropicGaussianMixture::standard_normal(2),
            NoiseChannel::Ou { t: 1.0 },
            2,
            &mut rng,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_batch_csv(&b, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("y_0,y_1,z_0,z_1,x_0,x_1,t,noise_var"));
        assert_eq!(lines.count(), 2);
    }
}

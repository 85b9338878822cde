//! Discretized reverse (DDPM) sampler.
//!
//! With the score frozen at the start of a step, the reverse SDE
//! `dX = (X + 2ŝ)dτ + √2 dB` is linear and is integrated exactly over the
//! step (see [`ddpm_step`]). A schedule time `t_k` means the state currently
//! approximates `q_{t_k}`; step `k` moves it toward `q_{t_{k+1}}`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::mixture::{norm_sq, Channel, IsotropicGaussianMixture};
use crate::rng::{substream, tags, Stream};
use crate::schedule::{noise_var, Schedule};
use crate::stats::upper_quantile;

/// A (possibly learned) estimate of the score `∇ log q_t`.
///
/// `evaluate` must be deterministic in `(t, x)` and safe to call from many
/// threads at once.
pub trait ScoreModel: Send + Sync {
    fn evaluate(&self, t: f64, x: &[f64]) -> Vec<f64>;

    fn descriptor(&self) -> String;
}

impl<M: ScoreModel + ?Sized> ScoreModel for Arc<M> {
    fn evaluate(&self, t: f64, x: &[f64]) -> Vec<f64> {
        (**self).evaluate(t, x)
    }

    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
}

impl<M: ScoreModel + ?Sized> ScoreModel for Box<M> {
    fn evaluate(&self, t: f64, x: &[f64]) -> Vec<f64> {
        (**self).evaluate(t, x)
    }

    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
}

/// The exact score of `q_t` for a known data mixture `q0`.
#[derive(Debug, Clone)]
pub struct AnalyticScore {
    pub q0: IsotropicGaussianMixture,
}

impl AnalyticScore {
    pub fn new(q0: IsotropicGaussianMixture) -> Self {
        Self { q0 }
    }
}

impl ScoreModel for AnalyticScore {
    fn evaluate(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.q0.score_channel_into(Channel::ou(t), x, &mut out);
        out
    }

    fn descriptor(&self) -> String {
        format!("analytic(k={}, d={})", self.q0.components().len(), self.q0.dim())
    }
}

/// The score of one fixed distribution, ignoring `t`. Members of finite
/// hypothesis classes are of this kind.
#[derive(Debug, Clone)]
pub struct FrozenHypothesis {
    pub label: String,
    pub law: IsotropicGaussianMixture,
}

impl FrozenHypothesis {
    pub fn new(label: impl Into<String>, law: IsotropicGaussianMixture) -> Self {
        Self {
            label: label.into(),
            law,
        }
    }
}

impl ScoreModel for FrozenHypothesis {
    fn evaluate(&self, _t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.law.score_channel_into(Channel::IDENTITY, x, &mut out);
        out
    }

    fn descriptor(&self) -> String {
        format!("frozen({})", self.label)
    }
}

/// Deterministic error injected on top of a base score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    /// Adds `bias` to every coordinate at every time.
    Bias { bias: f64 },
    /// Adds `scale/σ_t` to every coordinate when `t < below`.
    LowNoiseBias { below: f64, scale: f64 },
}

impl Perturbation {
    fn offset(&self, t: f64) -> f64 {
        match *self {
            Perturbation::Bias { bias } => bias,
            Perturbation::LowNoiseBias { below, scale } if t < below => scale / noise_var(t).sqrt(),
            Perturbation::LowNoiseBias { .. } => 0.0,
        }
    }
}

pub struct CorruptedScore<M> {
    pub base: M,
    pub perturbation: Perturbation,
}

impl<M: ScoreModel> CorruptedScore<M> {
    pub fn new(base: M, perturbation: Perturbation) -> Self {
        Self { base, perturbation }
    }
}

impl<M: ScoreModel> ScoreModel for CorruptedScore<M> {
    fn evaluate(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let off = self.perturbation.offset(t);
        let mut s = self.base.evaluate(t, x);
        s.iter_mut().for_each(|v| *v += off);
        s
    }

    fn descriptor(&self) -> String {
        format!("corrupted({}, {:?})", self.base.descriptor(), self.perturbation)
    }
}

impl<M> fmt::Debug for CorruptedScore<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CorruptedScore")
            .field("perturbation", &self.perturbation)
            .finish()
    }
}

/// Exact solution of `dX = (X + 2ŝ)dτ + √2 dB` over duration `h` with `ŝ`
/// frozen: mean `e^h x + 2(e^h - 1)ŝ`, noise std `√(e^{2h} - 1)`.
pub fn ddpm_step(x: &[f64], s_hat: &[f64], h: f64) -> Result<(Vec<f64>, f64)> {
    if !(h > 0.0) || !h.is_finite() {
        return invalid(format!("step size must be > 0, got {h}"));
    }
    if x.len() != s_hat.len() {
        return Err(LabError::DimensionMismatch {
            expected: x.len(),
            got: s_hat.len(),
        });
    }
    let (growth, drift, std) = step_coefficients(h);
    Ok((
        x.iter().zip(s_hat).map(|(xi, si)| growth * xi + drift * si).collect(),
        std,
    ))
}

fn step_coefficients(h: f64) -> (f64, f64, f64) {
    let em1 = h.exp_m1();
    (1.0 + em1, 2.0 * em1, (2.0 * h).exp_m1().sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    /// `N(0, I)`, the implementable initialization.
    StandardNormal,
    /// Exact `q_T` for the data mixture, isolating discretization error.
    ExactQt,
}

/// Per-step summary across all paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub time: f64,
    pub mean_norm: f64,
    pub score_norm_median: f64,
    pub score_norm_q90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerOutput {
    pub samples: Vec<Vec<f64>>,
    pub per_step_trace: Option<Vec<StepTrace>>,
    pub schedule: Schedule,
    pub model: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerOptions {
    pub init: Init,
    pub trace: bool,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self {
            init: Init::StandardNormal,
            trace: false,
        }
    }
}

struct PathState {
    x: Vec<f64>,
    rng: Stream,
}

/// Run `n` reverse paths along `schedule`. Path `i` draws all of its noise
/// from substream `(seed, i)`, so the output is independent of thread count.
///
/// `q0` is required only for [`Init::ExactQt`]; `dim` fixes the state
/// dimension for standard-normal starts.
pub fn run_sampler<M: ScoreModel + ?Sized>(
    schedule: &Schedule,
    model: &M,
    n: usize,
    dim: usize,
    seed: u64,
    q0: Option<&IsotropicGaussianMixture>,
    options: SamplerOptions,
) -> Result<SamplerOutput> {
    schedule.validate()?;
    if n == 0 {
        return invalid("sampler needs n >= 1");
    }
    let q_start = match options.init {
        Init::StandardNormal => None,
        Init::ExactQt => {
            let q0 = q0.ok_or_else(|| LabError::InvalidInput("exact_qT init needs the data mixture".into()))?;
            if q0.dim() != dim {
                return Err(LabError::DimensionMismatch {
                    expected: dim,
                    got: q0.dim(),
                });
            }
            Some(q0.smooth(schedule.horizon)?)
        }
    };

    let mut states: Vec<PathState> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, &[tags::SAMPLER, i]);
            let x = match &q_start {
                Some(q) => q.sample_one(&mut rng),
                None => (0..dim).map(|_| rng.sample(StandardNormal)).collect(),
            };
            PathState { x, rng }
        })
        .collect();

    let mut trace = options.trace.then(Vec::new);
    for (k, (t, h)) in schedule.iter_steps().enumerate() {
        let (growth, drift, std) = step_coefficients(h);
        let score_norms: Vec<f64> = states
            .par_iter_mut()
            .map(|st| {
                let s = model.evaluate(t, &st.x);
                let sn = norm_sq(&s);
                if !sn.is_finite() {
                    return Err(LabError::NonFiniteScore {
                        step: k,
                        time: t,
                        point_norm: norm_sq(&st.x).sqrt(),
                    });
                }
                for (xi, si) in st.x.iter_mut().zip(&s) {
                    *xi = growth * *xi + drift * si + std * st.rng.sample::<f64, _>(StandardNormal);
                }
                Ok(sn.sqrt())
            })
            .collect::<Result<_>>()?;
        if let Some(tr) = trace.as_mut() {
            let mean_norm = states.iter().map(|s| norm_sq(&s.x).sqrt()).sum::<f64>() / n as f64;
            tr.push(StepTrace {
                time: t,
                mean_norm,
                score_norm_median: upper_quantile(&score_norms, 0.5)?,
                score_norm_q90: upper_quantile(&score_norms, 0.1)?,
            });
        }
    }

    Ok(SamplerOutput {
        samples: states.into_iter().map(|s| s.x).collect(),
        per_step_trace: trace,
        schedule: schedule.clone(),
        model: model.descriptor(),
        seed,
    })
}

/// Rescale terminal samples by `e^{t_N}`, undoing the OU contraction.
pub fn terminal_unsmoothing_scale(output: &SamplerOutput) -> Vec<Vec<f64>> {
    let scale = output.schedule.terminal_time().exp();
    output
        .samples
        .iter()
        .map(|x| x.iter().map(|v| v * scale).collect())
        .collect()
}

#[derive(Serialize)]
struct Sidecar<'a> {
    schedule: &'a Schedule,
    model: &'a str,
    seed: u64,
    n: usize,
    terminal_time: f64,
}

impl SamplerOutput {
    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    /// Write `<stem>.csv` (columns `x_0..x_{d-1}`) and `<stem>.json`.
    pub fn persist(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv")))?;
        w.write_record((0..self.dim()).map(|i| format!("x_{i}")))?;
        for x in &self.samples {
            w.write_record(x.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        let sidecar = Sidecar {
            schedule: &self.schedule,
            model: &self.model,
            seed: self.seed,
            n: self.samples.len(),
            terminal_time: self.schedule.terminal_time(),
        };
        fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&sidecar)?,
        )?;
        Ok(())
    }
}

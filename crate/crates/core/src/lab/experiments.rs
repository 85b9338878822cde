use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    single_step_size, verify_local_lipschitz, verify_max_deviation, verify_score_norm_subgaussian,
    verify_single_step_discretization, verify_smoothing_drift, LemmaId, LemmaReport,
};
use crate::error::{LabError, Result};
use crate::estimation::{
    build_info_theoretic_pair, discretization_functional, draw_paired_batch, erm, error_report, HypothesisClass,
};
use crate::metrics::{quantile_grid, tv_binned, w2_empirical_1d};
use crate::mixture::IsotropicGaussianMixture;
use crate::rng::{label, substream, tags};
use crate::sampler::{run_sampler, AnalyticScore, Init, SamplerOptions, ScoreModel};
use crate::schedule::{Schedule, ScheduleKind};
use crate::stats::ols_slope;

use super::catalog::catalog;
use super::config::{Experiment, ExperimentConfig, InitKind, MixtureSpec};

fn need<T: Clone>(v: &Option<T>, name: &str) -> Result<T> {
    v.clone()
        .ok_or_else(|| LabError::Config(format!("{name} is unset; resolve the config first")))
}

fn derived_seed(seed: u64, e: Experiment, labels: &[u64]) -> u64 {
    let mut path = vec![tags::EXPERIMENT, label(e.name())];
    path.extend_from_slice(labels);
    substream(seed, &path).next_u64()
}

fn one_dimensional(q0: &IsotropicGaussianMixture, e: Experiment) -> Result<()> {
    if q0.dim() != 1 {
        return Err(LabError::Config(format!(
            "{e} needs a 1-d mixture, got d = {}",
            q0.dim()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleCompareRow {
    pub kind: ScheduleKind,
    pub n_requested: usize,
    pub steps_realized: usize,
    pub terminal_time: f64,
    pub w2: f64,
    pub tv_binned: f64,
    pub kl_budget: f64,
}

/// Run every schedule kind at each sweep point. Constant and linear
/// schedules reuse the adaptive schedule's realized step count and terminal
/// time, so all kinds target the same `q_{t_N}` with equal work; all kinds
/// share the sampler seed of the sweep point. Where the adaptive rule
/// overshoots, its row is dropped and the others use `(N, γ)`.
pub fn schedule_compare(cfg: &ExperimentConfig) -> Result<Vec<ScheduleCompareRow>> {
    let e = Experiment::ScheduleCompare;
    let q0 = need(&cfg.mixture, "mixture")?.build()?;
    one_dimensional(&q0, e)?;
    let kinds = need(&cfg.schedule.kinds, "schedule.kinds")?;
    let horizon = need(&cfg.schedule.horizon, "schedule.T")?;
    let gamma = need(&cfg.schedule.gamma, "schedule.gamma")?;
    let sweep = need(&cfg.schedule.n, "schedule.N")?;
    let n = need(&cfg.sampler.n, "sampler.n")?;
    let bins = need(&cfg.sampler.bins, "sampler.bins")?;
    let init = match need(&cfg.sampler.init, "sampler.init")? {
        InitKind::StandardNormal => Init::StandardNormal,
        InitKind::ExactQt => Init::ExactQt,
    };
    let model = AnalyticScore::new(q0.clone());
    let mut rows = Vec::new();
    for (idx, &n_req) in sweep.iter().enumerate() {
        let adaptive = Schedule::adaptive(horizon, gamma, n_req).ok();
        let (count, t_end) = adaptive
            .as_ref()
            .map_or((n_req, gamma), |s| (s.len(), s.terminal_time()));
        let seed = derived_seed(cfg.seed, e, &[idx as u64]);
        let target = q0.smooth(t_end)?;
        let reference = quantile_grid(&target, n)?;
        for &kind in &kinds {
            let schedule = match kind {
                ScheduleKind::Adaptive => match &adaptive {
                    Some(s) => s.clone(),
                    None => continue,
                },
                ScheduleKind::Constant => Schedule::constant(horizon, t_end, count)?,
                ScheduleKind::Linear => Schedule::linear(horizon, t_end, count)?,
            };
            let out = run_sampler(
                &schedule,
                &model,
                n,
                1,
                seed,
                Some(&q0),
                SamplerOptions { init, trace: false },
            )?;
            let xs: Vec<f64> = out.samples.iter().map(|x| x[0]).collect();
            rows.push(ScheduleCompareRow {
                kind,
                n_requested: n_req,
                steps_realized: schedule.len(),
                terminal_time: schedule.terminal_time(),
                w2: w2_empirical_1d(&xs, &reference)?.value,
                tv_binned: tv_binned(&xs, &target, bins)?.value,
                kl_budget: schedule.kl_budget(),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardInstanceRow {
    pub m: usize,
    pub trials: usize,
    pub l2_failure_fraction: f64,
    pub quantile_failure_fraction: f64,
    pub far_selected_fraction: f64,
    pub no_outlier_fraction: f64,
    pub far_and_no_outlier_fraction: f64,
    pub mean_l2_sq: f64,
    pub max_quantile_eps: f64,
}

#[derive(Debug, Clone, Copy)]
struct HardTrial {
    far: bool,
    outlier_seen: bool,
    l2_sq: f64,
    quantile_eps: f64,
}

/// ERM over `{s1, s2}` on samples from `p1`. Each trial hides which label is
/// the truth behind a seeded coin, so exact loss ties resolve to either member.
pub fn hard_instance(cfg: &ExperimentConfig) -> Result<Vec<HardInstanceRow>> {
    let e = Experiment::HardInstance;
    let (eta, r, sigma) = match need(&cfg.mixture, "mixture")? {
        MixtureSpec::HardInfo { eta, r, sigma } => (eta, r, sigma),
        other => {
            return Err(LabError::Config(format!(
                "{e} needs the hard_info preset, got {other:?}"
            )))
        }
    };
    let est = &cfg.estimation;
    let delta = need(&est.delta, "estimation.delta")?;
    let sweep = need(&est.m, "estimation.m")?;
    let n_eval = need(&est.n_eval, "estimation.n_eval")?;
    let trials = need(&est.trials, "estimation.trials")?;
    let threshold = need(&est.threshold, "estimation.threshold")?;
    let pair = build_info_theoretic_pair(eta, r, sigma)?;
    let s1: std::sync::Arc<dyn ScoreModel> = std::sync::Arc::new(pair.s1.clone());
    let s2: std::sync::Arc<dyn ScoreModel> = std::sync::Arc::new(pair.s2.clone());
    let class_ab = HypothesisClass::new(vec![("a".into(), s1.clone()), ("b".into(), s2.clone())], pair.channel)?;
    let class_ba = HypothesisClass::new(vec![("a".into(), s2), ("b".into(), s1)], pair.channel)?;

    sweep
        .iter()
        .enumerate()
        .map(|(mi, &m)| {
            let results: Vec<HardTrial> = (0..trials as u64)
                .into_par_iter()
                .map(|i| {
                    let mut rng = substream(cfg.seed, &[tags::EXPERIMENT, label(e.name()), mi as u64, i]);
                    let truth_is_a: bool = rng.gen();
                    let class = if truth_is_a { &class_ab } else { &class_ba };
                    let batch = draw_paired_batch(&pair.base1, pair.channel, m, &mut rng)?;
                    let outlier_seen = batch.iter().any(|s| s.y[0] < -0.5 * r);
                    let out = erm(class, &batch)?;
                    let far = (out.selected == "a") != truth_is_a;
                    let selected = class.get(&out.selected).expect("selected label is a member");
                    let rep = error_report(selected.as_ref(), &pair.s1, &pair.p1, 0.0, delta, n_eval, &mut rng)?;
                    Ok(HardTrial {
                        far,
                        outlier_seen,
                        l2_sq: rep.l2_sq,
                        quantile_eps: rep.quantile_eps,
                    })
                })
                .collect::<Result<_>>()?;
            let frac = |f: &dyn Fn(&HardTrial) -> bool| results.iter().filter(|t| f(t)).count() as f64 / trials as f64;
            Ok(HardInstanceRow {
                m,
                trials,
                l2_failure_fraction: frac(&|t| t.l2_sq > threshold),
                quantile_failure_fraction: frac(&|t| t.quantile_eps > threshold),
                far_selected_fraction: frac(&|t| t.far),
                no_outlier_fraction: frac(&|t| !t.outlier_seen),
                far_and_no_outlier_fraction: frac(&|t| t.far && !t.outlier_seen),
                mean_l2_sq: results.iter().map(|t| t.l2_sq).sum::<f64>() / trials as f64,
                max_quantile_eps: results.iter().map(|t| t.quantile_eps).fold(0.0, f64::max),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub lemma: LemmaId,
    pub mixture: String,
    pub dim: usize,
    pub t: f64,
    pub param: f64,
    pub trials: usize,
    pub delta: f64,
    pub empirical_quantile: f64,
    pub bound_form: f64,
    pub empirical_constant: f64,
    pub seed: u64,
}

pub const VERIFY_TIMES: [f64; 2] = [0.1, 1.0];
pub const MAX_DEVIATION_WINDOW: f64 = 0.05;
pub const LIPSCHITZ_RADIUS_SCALE: f64 = 1.0;
pub const SMOOTHING_ETA: f64 = 0.01;
pub const SINGLE_STEP_EPSILON: f64 = 0.25;

/// Every verifier over the catalog and the fixed time grid.
pub fn verify_lemmas(cfg: &ExperimentConfig) -> Result<Vec<VerifyRow>> {
    let e = Experiment::VerifyLemmas;
    let v = &cfg.verify;
    let entries = catalog(need(&v.catalog, "verify.catalog")?);
    let trials = need(&v.trials, "verify.trials")?;
    let delta = need(&v.delta, "verify.delta")?;
    let mut rows = Vec::new();
    for (mi, entry) in entries.iter().enumerate() {
        for (ti, &t) in VERIFY_TIMES.iter().enumerate() {
            for id in LemmaId::ALL {
                let seed = derived_seed(cfg.seed, e, &[label(id.name()), mi as u64, ti as u64]);
                let q0 = &entry.law;
                let (param, report): (f64, LemmaReport) = match id {
                    LemmaId::MaxDeviation => (
                        MAX_DEVIATION_WINDOW,
                        verify_max_deviation(q0, t, MAX_DEVIATION_WINDOW, trials, delta, seed)?,
                    ),
                    LemmaId::ScoreNorm => (0.0, verify_score_norm_subgaussian(q0, t, trials, delta, seed)?),
                    LemmaId::LocalLipschitz => (
                        LIPSCHITZ_RADIUS_SCALE,
                        verify_local_lipschitz(q0, t, LIPSCHITZ_RADIUS_SCALE, trials, delta, seed)?,
                    ),
                    LemmaId::SmoothingDrift => (
                        SMOOTHING_ETA,
                        verify_smoothing_drift(q0, t, SMOOTHING_ETA, trials, delta, seed)?,
                    ),
                    LemmaId::SingleStepDiscretization => (
                        single_step_size(q0.dim(), t, SINGLE_STEP_EPSILON, delta),
                        verify_single_step_discretization(q0, t, SINGLE_STEP_EPSILON, trials, delta, seed)?,
                    ),
                };
                rows.push(VerifyRow {
                    lemma: id,
                    mixture: entry.name.to_string(),
                    dim: q0.dim(),
                    t,
                    param,
                    trials: report.trials,
                    delta: report.delta,
                    empirical_quantile: report.empirical_quantile,
                    bound_form: report.bound_form,
                    empirical_constant: report.empirical_constant,
                    seed,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirsanovRow {
    pub n_requested: usize,
    pub steps_realized: usize,
    pub terminal_time: f64,
    pub kl_budget: f64,
    pub functional: f64,
    pub standard_error: f64,
}

/// The pathwise discretization functional along the adaptive schedule for
/// each `N` in the sweep.
pub fn girsanov_budget(cfg: &ExperimentConfig) -> Result<Vec<GirsanovRow>> {
    let e = Experiment::GirsanovBudget;
    let q0 = need(&cfg.mixture, "mixture")?.build()?;
    one_dimensional(&q0, e)?;
    let horizon = need(&cfg.schedule.horizon, "schedule.T")?;
    let gamma = need(&cfg.schedule.gamma, "schedule.gamma")?;
    let sweep = need(&cfg.schedule.n, "schedule.N")?;
    let n_paths = need(&cfg.estimation.n_paths, "estimation.n_paths")?;
    let substeps = need(&cfg.estimation.substeps, "estimation.substeps")?;
    sweep
        .iter()
        .enumerate()
        .map(|(idx, &n)| {
            let schedule = Schedule::adaptive(horizon, gamma, n)?;
            let est = discretization_functional(
                &q0,
                &schedule,
                n_paths,
                substeps,
                derived_seed(cfg.seed, e, &[idx as u64]),
            )?;
            Ok(GirsanovRow {
                n_requested: n,
                steps_realized: schedule.len(),
                terminal_time: schedule.terminal_time(),
                kl_budget: schedule.kl_budget(),
                functional: est.value,
                standard_error: est.standard_error,
            })
        })
        .collect()
}

/// Least-squares slope of `ln functional` against `ln N`.
pub fn girsanov_slope(rows: &[GirsanovRow]) -> f64 {
    let x: Vec<f64> = rows.iter().map(|r| (r.n_requested as f64).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.functional.ln()).collect();
    ols_slope(&x, &y)
}

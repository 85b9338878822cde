use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::estimation::{build_info_theoretic_pair, build_score_matching_lower_bound_instance};
use crate::mixture::IsotropicGaussianMixture;
use crate::schedule::ScheduleKind;

use super::catalog::CatalogName;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    ScheduleCompare,
    HardInstance,
    VerifyLemmas,
    GirsanovBudget,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [
        Experiment::ScheduleCompare,
        Experiment::HardInstance,
        Experiment::VerifyLemmas,
        Experiment::GirsanovBudget,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::ScheduleCompare => "schedule-compare",
            Experiment::HardInstance => "hard-instance",
            Experiment::VerifyLemmas => "verify-lemmas",
            Experiment::GirsanovBudget => "girsanov-budget",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| LabError::Config(format!("unknown experiment {s:?}")))
    }
}

fn default_r() -> f64 {
    0.5
}
fn default_rho() -> f64 {
    0.01
}
fn default_single_rho() -> f64 {
    0.5
}
fn default_eta() -> f64 {
    0.001
}
fn default_hard_r() -> f64 {
    10_000.0
}
fn default_sigma() -> f64 {
    1.0
}
fn default_s() -> f64 {
    40.0
}
fn default_m() -> usize {
    10_000
}

/// A named data law or an explicit mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum MixtureSpec {
    /// `½N(-R, ρ²) + ½N(R, ρ²)`.
    TwoGaussian {
        #[serde(default = "default_r", rename = "R")]
        r: f64,
        #[serde(default = "default_rho")]
        rho: f64,
    },
    /// `N(0, ρ²)`.
    SingleGaussian {
        #[serde(default = "default_single_rho")]
        rho: f64,
    },
    /// `(1-η)N(0,σ²) + ηN(-R,σ²)`.
    HardInfo {
        #[serde(default = "default_eta")]
        eta: f64,
        #[serde(default = "default_hard_r", rename = "R")]
        r: f64,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    /// The adversarial mixture `ηN(0,σ²) + (1-η)N(S,σ²)`.
    HardSm {
        #[serde(default = "default_s", rename = "S")]
        s: f64,
        #[serde(default = "default_m")]
        m: usize,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    Explicit {
        law: IsotropicGaussianMixture,
    },
}

impl MixtureSpec {
    pub fn two_gaussian() -> Self {
        MixtureSpec::TwoGaussian {
            r: default_r(),
            rho: default_rho(),
        }
    }

    pub fn hard_info() -> Self {
        MixtureSpec::HardInfo {
            eta: default_eta(),
            r: default_hard_r(),
            sigma: default_sigma(),
        }
    }

    pub fn build(&self) -> Result<IsotropicGaussianMixture> {
        match self {
            &MixtureSpec::TwoGaussian { r, rho } => {
                IsotropicGaussianMixture::new(1, vec![(0.5, vec![-r], rho * rho), (0.5, vec![r], rho * rho)])
            }
            &MixtureSpec::SingleGaussian { rho } => IsotropicGaussianMixture::gaussian(vec![0.0], rho * rho),
            &MixtureSpec::HardInfo { eta, r, sigma } => Ok(build_info_theoretic_pair(eta, r, sigma)?.p1),
            &MixtureSpec::HardSm { s, m, sigma } => Ok(build_score_matching_lower_bound_instance(s, m, sigma)?.p_hat),
            MixtureSpec::Explicit { law } => Ok(law.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    StandardNormal,
    ExactQt,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinds: Option<Vec<ScheduleKind>>,
    #[serde(default, rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_eval: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<CatalogName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ceiling: Option<f64>,
}

/// Experiment configuration as read from TOML or JSON. Missing values are
/// filled by [`ExperimentConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureSpec>,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub estimation: EstimationSection,
    #[serde(default)]
    pub verify: VerifySection,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            seed: 0,
            output_dir: None,
            tag: None,
            mixture: None,
            schedule: ScheduleSection::default(),
            sampler: SamplerSection::default(),
            estimation: EstimationSection::default(),
            verify: VerifySection::default(),
        }
    }

    /// Parse TOML or JSON, chosen by extension (`.toml`, `.json`); other
    /// extensions try JSON first.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml(&text),
            Some("json") => Self::from_json(&text),
            _ => Self::from_json(&text).or_else(|_| Self::from_toml(&text)),
        }
    }

    /// Load a config for a known subcommand: a missing `experiment` key is
    /// filled in, a different one is rejected.
    pub fn load_for(path: &Path, expected: Experiment) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut value: serde_json::Value = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| LabError::Config(e.to_string()))?,
            _ => serde_json::from_str(&text)
                .or_else(|_| toml::from_str(&text))
                .map_err(|e| LabError::Config(format!("{}: not valid JSON or TOML: {e}", path.display())))?,
        };
        let obj = value
            .as_object_mut()
            .ok_or_else(|| LabError::Config("config must be a table".into()))?;
        match obj.get("experiment") {
            None => {
                obj.insert("experiment".into(), expected.name().into());
            }
            Some(v) if v.as_str() == Some(expected.name()) => {}
            Some(v) => {
                return Err(LabError::Config(format!(
                    "config names experiment {v}, but the subcommand is {expected}"
                )))
            }
        }
        serde_json::from_value(value).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    /// Fill every value the experiment uses with its default and validate
    /// ranges. Resolving a resolved config is the identity.
    pub fn resolve(&self) -> Result<Self> {
        let mut c = self.clone();
        let d = Defaults::for_experiment(c.experiment);
        c.mixture.get_or_insert(d.mixture);
        let s = &mut c.schedule;
        if c.experiment != Experiment::HardInstance && c.experiment != Experiment::VerifyLemmas {
            s.kinds.get_or_insert_with(|| d.kinds.to_vec());
            s.horizon.get_or_insert(d.horizon);
            s.gamma.get_or_insert(d.gamma);
            s.n.get_or_insert_with(|| d.n.to_vec());
        }
        match c.experiment {
            Experiment::ScheduleCompare => {
                c.sampler.n.get_or_insert(d.sampler_n);
                c.sampler.init.get_or_insert(InitKind::StandardNormal);
                c.sampler.bins.get_or_insert(64);
            }
            Experiment::HardInstance => {
                let e = &mut c.estimation;
                e.delta.get_or_insert(0.01);
                e.m.get_or_insert_with(|| vec![10, 50, 100, 500, 1000, 5000]);
                e.n_eval.get_or_insert(10_000);
                e.trials.get_or_insert(200);
                e.threshold.get_or_insert(1e-6);
            }
            Experiment::VerifyLemmas => {
                let v = &mut c.verify;
                v.catalog.get_or_insert(CatalogName::Full);
                v.trials.get_or_insert(4000);
                v.delta.get_or_insert(0.1);
                v.ceiling.get_or_insert(10.0);
            }
            Experiment::GirsanovBudget => {
                c.estimation.n_paths.get_or_insert(2000);
                c.estimation.substeps.get_or_insert(8);
            }
        }
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::Config(msg));
        let s = &self.schedule;
        if let Some(t) = s.horizon {
            if !(t >= 1.0) || !t.is_finite() {
                return bad(format!("schedule.T must be >= 1, got {t}"));
            }
        }
        if let Some(g) = s.gamma {
            if !(g > 0.0 && g < 1.0) {
                return bad(format!("schedule.gamma must lie in (0, 1), got {g}"));
            }
        }
        if let Some(n) = &s.n {
            if n.is_empty() || n.contains(&0) {
                return bad(format!(
                    "schedule.N must be a non-empty list of positive counts, got {n:?}"
                ));
            }
        }
        if matches!(&s.kinds, Some(k) if k.is_empty()) {
            return bad("schedule.kinds must not be empty".into());
        }
        if self.sampler.n == Some(0) {
            return bad("sampler.n must be >= 1".into());
        }
        let e = &self.estimation;
        for (name, delta) in [("estimation.delta", e.delta), ("verify.delta", self.verify.delta)] {
            if let Some(delta) = delta {
                if !(delta > 0.0 && delta < 1.0) {
                    return bad(format!("{name} must lie in (0, 1), got {delta}"));
                }
            }
        }
        if e.trials == Some(0) || self.verify.trials == Some(0) {
            return bad("trials must be >= 1".into());
        }
        if matches!(&e.m, Some(m) if m.is_empty() || m.contains(&0)) {
            return bad("estimation.m must be a non-empty list of positive sizes".into());
        }
        if let (Some(delta), Some(n_eval)) = (e.delta, e.n_eval) {
            let need = crate::estimation::min_eval_count(delta);
            if n_eval < need {
                return bad(format!(
                    "estimation.n_eval must be >= ceil(10/delta) = {need}, got {n_eval}"
                ));
            }
        }
        if e.n_paths.is_some_and(|n| n < 2) || e.substeps == Some(0) {
            return bad("estimation.n_paths must be >= 2 and substeps >= 1".into());
        }
        if let Some(bins) = self.sampler.bins {
            if bins < crate::metrics::MIN_BINS {
                return bad(format!(
                    "sampler.bins must be >= {}, got {bins}",
                    crate::metrics::MIN_BINS
                ));
            }
        }
        if let Some(c) = self.verify.ceiling {
            if c.is_nan() {
                return bad("verify.ceiling must be a number".into());
            }
        }
        Ok(())
    }
}

struct Defaults {
    mixture: MixtureSpec,
    kinds: &'static [ScheduleKind],
    horizon: f64,
    gamma: f64,
    n: &'static [usize],
    sampler_n: usize,
}

impl Defaults {
    fn for_experiment(e: Experiment) -> Self {
        let base = Defaults {
            mixture: MixtureSpec::two_gaussian(),
            kinds: &ScheduleKind::ALL,
            horizon: 3.0,
            gamma: 1e-3,
            n: &[20, 50, 100, 200, 400],
            sampler_n: 50_000,
        };
        match e {
            Experiment::ScheduleCompare | Experiment::VerifyLemmas => base,
            Experiment::HardInstance => Defaults {
                mixture: MixtureSpec::hard_info(),
                ..base
            },
            Experiment::GirsanovBudget => Defaults {
                kinds: &[ScheduleKind::Adaptive],
                gamma: 0.01,
                n: &[50, 100, 200, 400, 800],
                ..base
            },
        }
    }
}

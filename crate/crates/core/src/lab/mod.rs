//! Configuration-driven experiment runner.
//!
//! Every experiment is a pure function of its resolved config (seed
//! included). Results land in `<out>/<experiment>/<tag>/` as `rows.csv` plus
//! a `manifest.json` that embeds the resolved config, so a manifest can be
//! fed back through [`run`] to reproduce the rows byte for byte.

pub mod catalog;
pub mod config;
pub mod experiments;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{LabError, Result};

pub use catalog::{catalog, CatalogEntry, CatalogName};
pub use config::{Experiment, ExperimentConfig, InitKind, MixtureSpec};
pub use experiments::{
    girsanov_budget, girsanov_slope, hard_instance, schedule_compare, verify_lemmas, GirsanovRow, HardInstanceRow,
    ScheduleCompareRow, VerifyRow,
};

/// Bumped on breaking changes to any `rows.csv` schema.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub rows_csv: String,
    pub row_count: usize,
    pub summary: serde_json::Value,
    /// Rows breaking a policy ceiling (verify-lemmas only).
    pub violations: usize,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub artifact_version: String,
    pub experiment: Experiment,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub rows: usize,
    pub summary: serde_json::Value,
    pub wall_time_seconds: f64,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Resolve `config` and run its experiment.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let config = config.resolve()?;
    let start = Instant::now();
    let (rows_csv, row_count, summary, violations) = match config.experiment {
        Experiment::ScheduleCompare => {
            let rows = schedule_compare(&config)?;
            (to_csv(&rows)?, rows.len(), json!({}), 0)
        }
        Experiment::HardInstance => {
            let rows = hard_instance(&config)?;
            (to_csv(&rows)?, rows.len(), json!({}), 0)
        }
        Experiment::VerifyLemmas => {
            let rows = verify_lemmas(&config)?;
            let ceiling = config.verify.ceiling.unwrap_or(f64::INFINITY);
            let max = rows.iter().map(|r| r.empirical_constant).fold(0.0, f64::max);
            let violations = rows.iter().filter(|r| r.empirical_constant > ceiling).count();
            let summary = json!({"max_constant": max, "ceiling": ceiling, "violations": violations});
            (to_csv(&rows)?, rows.len(), summary, violations)
        }
        Experiment::GirsanovBudget => {
            let rows = girsanov_budget(&config)?;
            let summary = json!({"log_log_slope": girsanov_slope(&rows)});
            (to_csv(&rows)?, rows.len(), summary, 0)
        }
    };
    Ok(ExperimentResult {
        config,
        rows_csv,
        row_count,
        summary,
        violations,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Directory a result is written to under `out_root`.
pub fn output_dir(out_root: &Path, config: &ExperimentConfig) -> Result<PathBuf> {
    let tag = config
        .tag
        .as_deref()
        .ok_or_else(|| LabError::Config("output tag is unset".into()))?;
    if tag.is_empty() || tag.contains(['/', '\\']) || tag == "." || tag == ".." {
        return Err(LabError::Config(format!("invalid output tag {tag:?}")));
    }
    Ok(out_root.join(config.experiment.name()).join(tag))
}

/// Write `rows.csv` and `manifest.json`; returns the directory.
pub fn write_result(out_root: &Path, result: &ExperimentResult) -> Result<PathBuf> {
    let dir = output_dir(out_root, &result.config)?;
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("rows.csv"), &result.rows_csv)?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: result.config.experiment,
        seed: result.config.seed,
        config: result.config.clone(),
        rows: result.row_count,
        summary: result.summary.clone(),
        wall_time_seconds: result.wall_time_seconds,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(dir)
}

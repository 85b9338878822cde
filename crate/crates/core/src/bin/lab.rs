use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use difflab::lab::{self, Experiment, ExperimentConfig, Manifest};

#[derive(Parser)]
#[command(
    name = "lab",
    version,
    about = "Run diffusion-sampling experiments from a config file"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Terminal accuracy of adaptive, constant and linear schedules.
    ScheduleCompare(RunArgs),
    /// ERM failure rates on the indistinguishable mixture pair.
    HardInstance(RunArgs),
    /// Monte Carlo constants of the high-probability bounds.
    VerifyLemmas(RunArgs),
    /// Pathwise discretization functional against step count.
    GirsanovBudget(RunArgs),
    /// Re-run the config embedded in a manifest.json.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON config file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; results go to <out>/<experiment>/<tag>/.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output subdirectory name (default: run-<unix seconds>).
    #[arg(long)]
    tag: Option<String>,
    /// Largest acceptable empirical constant (verify-lemmas).
    #[arg(long)]
    ceiling: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ReplayArgs {
    /// manifest.json written by a previous run.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

const DEFAULT_OUT: &str = "lab-out";

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn set_threads(n: Option<usize>) -> difflab::Result<()> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| difflab::LabError::Config(format!("cannot set thread count: {e}")))?;
    }
    Ok(())
}

fn dispatch(command: Command) -> difflab::Result<ExitCode> {
    let (experiment, args) = match command {
        Command::ScheduleCompare(a) => (Experiment::ScheduleCompare, a),
        Command::HardInstance(a) => (Experiment::HardInstance, a),
        Command::VerifyLemmas(a) => (Experiment::VerifyLemmas, a),
        Command::GirsanovBudget(a) => (Experiment::GirsanovBudget, a),
        Command::Replay(a) => return replay(a),
    };
    set_threads(args.threads)?;
    let mut config = ExperimentConfig::load_for(&args.config, experiment)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = args.out {
        config.output_dir = Some(out);
    }
    if let Some(tag) = args.tag {
        config.tag = Some(tag);
    }
    if let Some(c) = args.ceiling {
        config.verify.ceiling = Some(c);
    }
    if config.tag.is_none() {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        config.tag = Some(format!("run-{secs}"));
    }
    let out_root = config.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    config.output_dir = Some(out_root.clone());
    finish(&out_root, &config)
}

fn replay(args: ReplayArgs) -> difflab::Result<ExitCode> {
    set_threads(args.threads)?;
    let manifest = Manifest::load(&args.config)?;
    let mut config = manifest.config;
    if let Some(out) = args.out {
        config.output_dir = Some(out);
    }
    let out_root = config.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    finish(&out_root, &config)
}

fn finish(out_root: &Path, config: &ExperimentConfig) -> difflab::Result<ExitCode> {
    let result = lab::run(config)?;
    let dir = lab::write_result(out_root, &result)?;
    println!(
        "{}: {} rows in {:.2}s -> {}",
        result.config.experiment,
        result.row_count,
        result.wall_time_seconds,
        dir.display()
    );
    if result.summary.as_object().is_some_and(|o| !o.is_empty()) {
        println!("summary: {}", result.summary);
    }
    if result.violations > 0 {
        eprintln!("{} rows exceed the ceiling", result.violations);
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

//! Batch runner for the reconstruction studies.
//!
//! Subcommands `run-synthetic`, `run-cdf`, `run-ouq` and `resume`. Exit codes:
//! `0` success, `1` bad configuration or a failed run, `2` unwritable output
//! directory, `3` unusable checkpoint.

pub mod config;
pub mod output;
pub mod runner;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{RawConfig, RunConfig, Study};
use monorecon::oracles::{GroundTruth, QualityMode};
use runner::{Finish, RunOptions};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("output: {0}")]
    Output(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("run failed: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Runtime(_) => 1,
            CliError::Output(_) => 2,
            CliError::Checkpoint(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "monorecon",
    version,
    about = "Adaptive reconstruction of monotone functions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reconstruct a synthetic target from noisy underestimates.
    RunSynthetic(RunArgs),
    /// Reconstruct the CDF of g(X) with a Monte-Carlo lower bound oracle.
    RunCdf(RunArgs),
    /// Reconstruct an optimal upper probability bound.
    RunOuq(RunArgs),
    /// Continue a checkpointed run.
    Resume(ResumeArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Exchange rate E.
    #[arg(long)]
    er: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// `continuous` or `discontinuous` (synthetic only).
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    stop_area: Option<f64>,
    /// `validation` or `effort` (synthetic only).
    #[arg(long)]
    quality_mode: Option<String>,
    /// Number of equispaced initial points.
    #[arg(long)]
    initial_count: Option<usize>,
    #[command(flatten)]
    checkpoint: CheckpointArgs,
}

#[derive(Debug, Args)]
struct CheckpointArgs {
    /// Write `checkpoint.json` every k iterations.
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Checkpoint after iteration k and stop.
    #[arg(long)]
    halt_after: Option<usize>,
}

#[derive(Debug, Args)]
struct ResumeArgs {
    checkpoint: PathBuf,
    /// Output directory; defaults to the checkpoint's directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    options: CheckpointArgs,
}

impl CheckpointArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            checkpoint_every: self.checkpoint_every,
            halt_after: self.halt_after,
        }
    }
}

fn parse_enum<T: serde::de::DeserializeOwned>(flag: &str, value: &str) -> Result<T, CliError> {
    serde_json::from_value(serde_json::Value::String(value.to_owned()))
        .map_err(|_| CliError::Config(format!("invalid --{flag} `{value}`")))
}

fn build_config(study: Study, args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut raw = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            RawConfig::from_toml(&text)?
        }
        None => RawConfig::default(),
    };
    if let Some(v) = args.er {
        raw.exchange_rate = Some(v);
    }
    if let Some(v) = args.iters {
        raw.iterations = Some(v);
    }
    if let Some(v) = args.seed {
        raw.seed = Some(v);
    }
    if let Some(v) = args.stop_area {
        raw.stop_area = Some(v);
    }
    if let Some(v) = args.initial_count {
        raw.initial.points = None;
        raw.initial.count = Some(v);
    }
    if let Some(v) = &args.quality_mode {
        if study != Study::Synthetic {
            return Err(CliError::Config(
                "--quality-mode applies to run-synthetic only".into(),
            ));
        }
        raw.quality_mode = Some(parse_enum::<QualityMode>("quality-mode", v)?);
    }
    if let Some(v) = &args.variant {
        if study != Study::Synthetic {
            return Err(CliError::Config(
                "--variant applies to run-synthetic only".into(),
            ));
        }
        raw.synthetic.get_or_insert_with(Default::default).variant =
            Some(parse_enum::<GroundTruth>("variant", v)?);
    }
    raw.resolve(study)
}

fn report(finish: &Finish, out: &std::path::Path) {
    match finish {
        Finish::Completed(s) => {
            let t = &s.trace;
            println!(
                "{}: {} iterations ({} split), {} points, {} oracle calls",
                out.display(),
                t.records.len(),
                t.split_count(),
                t.final_points.len(),
                t.total_calls
            );
            if let Some(fit) = s.sup.fit {
                println!("sup-norm rate {:.3}", fit.slope);
            }
            if let Some(fit) = s.l1.fit {
                println!("1-norm rate {:.3}", fit.slope);
            }
        }
        Finish::Halted {
            iteration,
            checkpoint,
        } => println!(
            "halted after iteration {iteration}: {}",
            checkpoint.display()
        ),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let (study, args) = match &cli.command {
        Command::RunSynthetic(a) => (Study::Synthetic, a),
        Command::RunCdf(a) => (Study::Cdf, a),
        Command::RunOuq(a) => (Study::Ouq, a),
        Command::Resume(r) => {
            let finish = runner::resume(&r.checkpoint, r.out.as_deref(), r.options.options())?;
            let out = r
                .out
                .clone()
                .or_else(|| r.checkpoint.parent().map(PathBuf::from))
                .unwrap_or_default();
            report(&finish, &out);
            return Ok(());
        }
    };
    let cfg = build_config(study, args)?;
    let finish = runner::run_study(cfg, &args.out, args.checkpoint.options())?;
    report(&finish, &args.out);
    Ok(())
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

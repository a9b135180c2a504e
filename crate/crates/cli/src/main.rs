//! `scenario-gcn` command-line entry point.

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "scenario-gcn",
    version,
    about = "Per-frame driving scenario classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Write a synthetic labeled dataset as JSON lines.
    Generate(GenerateArgs),
    /// Resample sequences to 4 Hz.
    Resample(ResampleArgs),
    /// Cut labeled recordings into scenario sequences with random context.
    Extract(ExtractArgs),
    /// Stratified train/validation split, written as a manifest.
    Split(SplitArgs),
    /// Train a model and write checkpoint, metrics and split manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint or a predictions file.
    Eval(EvalArgs),
    /// Per-frame predictions as JSON lines.
    Predict(PredictArgs),
    /// Error distribution report of a predictions file.
    EddReport(EddReportArgs),
}

#[derive(Debug, Args, Serialize)]
struct GenerateArgs {
    /// Class ids or ranges, e.g. `1-7` or `1,3,5`.
    #[arg(long, default_value = "1-7")]
    classes: String,
    #[arg(long, default_value_t = 40)]
    per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard deviation of position noise in meters.
    #[arg(long, default_value_t = 0.05)]
    noise_std: f64,
    /// Extra vehicles not involved in the scenario.
    #[arg(long, default_value_t = 0)]
    background_agents: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ResampleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ExtractArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Fraction of sequences used for training.
    #[arg(long, default_value_t = 0.8)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize, Clone, Copy)]
struct AblationArgs {
    /// Single GCN over the union of all relations.
    #[arg(long)]
    baseline: bool,
    /// Drop lane waypoints.
    #[arg(long)]
    no_map: bool,
    /// Proximity edges weighted by reciprocal distance.
    #[arg(long)]
    weighted_adjacency: bool,
    /// Residual connections in the spatial encoder.
    #[arg(long)]
    residual: bool,
    /// Classify spatial features without the temporal CNN.
    #[arg(long)]
    no_temporal: bool,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Fraction of sequences used for training.
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    /// Seeds the split, the initialization and the shuffle order.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 25)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0.1)]
    decay_factor: f64,
    /// Epochs after which the learning rate is multiplied by the decay factor.
    #[arg(long, value_delimiter = ',', default_value = "8,14,18")]
    decay_after: Vec<usize>,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    #[command(flatten)]
    ablation: AblationArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    /// Checkpoint file or training output directory.
    #[arg(
        long,
        conflicts_with = "predictions",
        required_unless_present = "predictions"
    )]
    ckpt: Option<PathBuf>,
    #[arg(long, requires = "ckpt")]
    data: Option<PathBuf>,
    /// Evaluate a predictions file instead of running a model.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Restrict to the validation sequences of this split manifest.
    #[arg(long, requires = "ckpt")]
    manifest: Option<PathBuf>,
    /// Also write the error distribution report.
    #[arg(long)]
    edd: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct PredictArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EddReportArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Failure classes mapped to exit codes 1 and 2.
#[derive(Debug)]
pub enum Failure {
    User(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    pub fn user(e: impl Into<anyhow::Error>) -> Self {
        Self::User(e.into())
    }

    pub fn internal(e: impl Into<anyhow::Error>) -> Self {
        Self::Internal(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    println!(
        "# effective config: {}",
        serde_json::to_string(&cli.command).expect("arguments serialize")
    );
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(2)
        }
    }
}

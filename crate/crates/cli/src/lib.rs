//! `pesanet` command line: generate, train, evaluate, rollout, plot.

pub mod commands;
pub mod config;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use pesanet_core::model::Variant;
use pesanet_core::pde::SystemKind;
use pesanet_core::train::Precision;

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "pesanet", version, about = "Physics-encoded spectral attention surrogate for 2-D PDEs")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// f32 or f64.
    #[arg(long, global = true)]
    pub precision: Option<Precision>,
    /// Output directory; each command has its own default from the config paths.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate seeded trajectories and write them as PSTR files.
    Generate(GenerateArgs),
    /// Train a model on a directory of trajectories.
    Train(TrainArgs),
    /// Roll a checkpoint out on test trajectories and write a report.
    Evaluate(EvaluateArgs),
    /// Roll a checkpoint out from one trajectory's initial condition.
    Rollout(RolloutArgs),
    /// Export heatmaps and error curves.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub system: Option<SystemKind>,
    #[arg(long)]
    pub grid: Option<usize>,
    /// Stored snapshots after the initial condition.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Solver steps per stored snapshot.
    #[arg(long)]
    pub save_stride: Option<usize>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Solver step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Domain side length.
    #[arg(long)]
    pub domain: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of training trajectories.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory of validation trajectories.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Required unless --predictions is given.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Directory of reference trajectories.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory of predicted trajectories named like the references; used
    /// instead of running the model.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long, default_value_t = pesanet_core::metrics::HCT_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Trajectory whose snapshot `--start` is the initial condition.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    /// Steps to predict; defaults to the rest of the input trajectory.
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Trajectory to render.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Reference trajectory; adds an error-curve CSV for --input.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Evaluation report whose error curves are exported as CSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Render every n-th snapshot.
    #[arg(long, default_value_t = 1)]
    pub every: usize,
}

/// Parse `args` (program name first) and run the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::parse_from(args);
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(p) = cli.precision {
        cfg.precision = p;
    }
    let out = cli.out.clone();
    match cli.command {
        Command::Generate(a) => commands::generate(&mut cfg, &a, out),
        Command::Train(a) => commands::train(&mut cfg, &a, out),
        Command::Evaluate(a) => commands::evaluate(&cfg, &a, out),
        Command::Rollout(a) => commands::rollout(&cfg, &a, out),
        Command::Plot(a) => commands::plot(&cfg, &a, out),
    }
}

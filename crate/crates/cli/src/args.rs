use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "lanecraft", version, about = "Train, evaluate and inspect desk-scale driving policies")]
pub struct Cli {
    /// Worker threads; LANECRAFT_THREADS caps this further.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Suppress progress output on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy with PPO.
    Train(TrainArgs),
    /// Closed-loop evaluation with an automatic safety driver.
    Eval(EvalArgs),
    /// Open-loop steering metrics of checkpoints on a reference drive.
    Offline(OfflineArgs),
    /// Check that a scenario's reference path stays on drivable ground.
    Validate(ValidateArgs),
    /// Write saliency overlays for every frame of a recorded drive.
    Saliency(SaliencyArgs),
    /// Re-simulate a recorded drive and compare it bit for bit.
    Replay(ReplayArgs),
    /// List the bundled presets and scenarios.
    List,
}

/// Where the run configuration comes from.
#[derive(Debug, Clone, Args, Default)]
pub struct ConfigSource {
    /// TOML (or .json) run config; a `preset` key layers it over a preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named preset (model id) used when no config file is given.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub source: ConfigSource,
    /// Continue from this checkpoint: weights and counters are restored.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config frame budget.
    #[arg(long)]
    pub frames: Option<u64>,
    /// Output directory for checkpoints, metrics and the config snapshot.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Checkpoint file, or a scripted stand-in: `expert`,
    /// `expert-noise:<std>[:<seed>]`, `constant:<steering>`.
    #[arg(long)]
    pub checkpoint: String,
    /// Comma-separated bundled scenario names or scenario files.
    #[arg(long, value_delimiter = ',')]
    pub scenarios: Vec<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model id in logs and reports (default: derived from the checkpoint).
    #[arg(long)]
    pub model: Option<String>,
    /// Store observations in the logs (for offline metrics and saliency).
    #[arg(long)]
    pub record_observations: bool,
    #[command(flatten)]
    pub source: ConfigSource,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct OfflineArgs {
    /// Checkpoints to replay; `reference` scores the reference itself.
    #[arg(long, num_args = 1.., required = true)]
    pub checkpoints: Vec<String>,
    /// Drive log with stored observations.
    #[arg(long)]
    pub reference: PathBuf,
    /// Leaderboard CSVs from `eval`; matching model ids enable the
    /// correlation report.
    #[arg(long, num_args = 1..)]
    pub autonomy: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Bundled scenario name, fixture name, or scenario file.
    #[arg(long)]
    pub scenario: String,
    /// Sampling step along the path in meters.
    #[arg(long, default_value_t = lanecraft::world::DEFAULT_VALIDATION_STEP)]
    pub step: f64,
    /// Directory for the config snapshot.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Action,
    Value,
}

#[derive(Debug, Clone, Args)]
pub struct SaliencyArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Drive log recorded with observations.
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Patch side in cells; 1 gives plain pixel saliency.
    #[arg(long, default_value_t = 5)]
    pub patch: usize,
    /// Average instead of summing the gradients inside a patch.
    #[arg(long)]
    pub average: bool,
    #[arg(long, value_enum, default_value_t = TargetArg::Action)]
    pub target: TargetArg,
    /// Include the semantic planes in the per-cell sum.
    #[arg(long)]
    pub include_semantic: bool,
    /// Share of overlay contrast modulated by the photometric image.
    #[arg(long, default_value_t = 0.3)]
    pub photo_weight: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub log: PathBuf,
    /// Directory holding scenario files for non-bundled scenarios.
    #[arg(long)]
    pub scenario_dir: Option<PathBuf>,
    /// Directory for the config snapshot.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

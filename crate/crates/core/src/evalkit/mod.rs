//! Evaluation: closed-loop drives under an automatic safety driver,
//! autonomy and deviation metrics, open-loop replay with steering MAE and
//! bucketed F1, rank correlations and leaderboards.

mod drive;
mod log;
mod metrics;
mod report;

use thiserror::Error;

pub use drive::{
    derive_interventions, drive, evaluate_with_safety_driver, replay_reference, trial_seed, verify_replay, ConstantDriver, Driver,
    DriverFactory, DriverSpec, EvalSetup, ExpertDriver, InterventionPolicy, NetworkDriver, NoisyExpertDriver, ReplayCheck, SafetyDriver,
};
pub use log::{DriveLog, Frame, LogHeader, LOG_FORMAT_VERSION};
pub use metrics::{
    autonomy_percent, average_f1, bucket, frame_distances, mean_abs_lateral, mean_deviation, oscillation, ranks, spearman, steering_mae,
    Bucket, BUCKET_THRESHOLD,
};
pub use report::{
    correlation_report, heat_csv, leaderboard, leaderboard_csv, trajectory_heat, CorrelationReport, LeaderboardRow, ModelMetrics,
    TrialResult,
};

use crate::env::EnvError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("log has no frames")]
    EmptyLog,
    #[error("log covers zero distance")]
    ZeroDistance,
    #[error("logs have different frame counts ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("arclength ranges of the two logs do not overlap")]
    Disjoint,
    #[error("need at least 3 models, got {0}")]
    TooFewModels(usize),
    #[error("reference log has no stored observations")]
    MissingObservations,
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid evaluation setting: {0}")]
    Config(String),
    #[error("drive log: {0}")]
    Log(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[cfg(test)]
mod tests;

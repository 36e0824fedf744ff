//! PPO training: rollout collection across parallel workers, GAE, the
//! clipped-surrogate update with synchronous gradient averaging, and the
//! checkpointed training loop.

mod check;
mod gae;
mod ppo;
mod rollout;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use check::{ppo_grad_check, ppo_grad_check_sampled, synthetic_batch};
pub use gae::{compute_gae, normalize, RewardScaler};
pub use ppo::{loss_and_grad, ppo_update, prepare_batch, segments, shard_loss_grad, split_even, sync_gradients, LossStats, Segment};
pub use rollout::{collect_rollout, worker_seeds, EpisodeSummary, RolloutBatch, RolloutWorker, Transition, WorkerRollout};
pub use train::{
    checkpoint_name, read_metrics, train, MetricsRow, TrainOptions, TrainOutcome, TrainSetup, UpdateCallback, METRICS_FILE, METRICS_HEADER,
};

use crate::env::EnvError;
use crate::policy::PolicyError;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("length mismatch: {rewards} rewards, {values} values, {dones} dones")]
    Length { rewards: usize, values: usize, dones: usize },
    #[error("gradient shapes differ: {0}")]
    Shape(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite {component} loss; update aborted")]
    NonFinite { component: &'static str },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("{path}: {source} (after {updates} updates)")]
    Io { path: String, updates: u64, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub learning_rate: f64,
    /// Steps collected per worker per update.
    pub n_step: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub entropy_coef: f64,
    pub clip_range: f64,
    pub value_coef: f64,
    pub l2_coef: f64,
    pub aux_depth_coef: f64,
    pub epochs_per_update: usize,
    pub minibatch_count: usize,
    /// Rollout workers, also the number of gradient shards per minibatch.
    pub workers: usize,
    /// Truncated backpropagation window for recurrent policies.
    pub bptt_window: usize,
    /// Global gradient-norm clip applied after averaging; 0 disables it.
    pub max_grad_norm: f64,
    /// Scale rewards by the running std of discounted returns before GAE.
    pub reward_norm: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            learning_rate: 3e-4,
            n_step: 256,
            gamma: 0.99,
            lambda: 0.95,
            entropy_coef: 0.01,
            clip_range: 0.1,
            value_coef: 0.5,
            l2_coef: 0.0,
            aux_depth_coef: 0.1,
            epochs_per_update: 4,
            minibatch_count: 4,
            workers: 4,
            bptt_window: 32,
            max_grad_norm: 0.5,
            reward_norm: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("ppo.{name} must lie in [0, 1], got {v}"))
            }
        };
        unit("gamma", self.gamma)?;
        unit("lambda", self.lambda)?;
        if !(self.clip_range > 0.0) {
            return Err(format!("ppo.clip_range must be positive, got {}", self.clip_range));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err("ppo.learning_rate must be positive".into());
        }
        for (name, v) in [
            ("entropy_coef", self.entropy_coef),
            ("value_coef", self.value_coef),
            ("l2_coef", self.l2_coef),
            ("aux_depth_coef", self.aux_depth_coef),
            ("max_grad_norm", self.max_grad_norm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("ppo.{name} must be a finite non-negative number"));
            }
        }
        for (name, v) in [
            ("n_step", self.n_step),
            ("epochs_per_update", self.epochs_per_update),
            ("minibatch_count", self.minibatch_count),
            ("workers", self.workers),
            ("bptt_window", self.bptt_window),
        ] {
            if v == 0 {
                return Err(format!("ppo.{name} must be at least 1"));
            }
        }
        Ok(())
    }
}

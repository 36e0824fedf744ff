use std::collections::VecDeque;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{
    collect_rollout, ppo_update, prepare_batch, worker_seeds, EpisodeSummary, LearnError, LossStats, PpoConfig, RewardScaler, RolloutWorker,
};
use crate::autodiff::Adam;
use crate::env::{Env, Track};
use crate::par::Workers;
use crate::policy::{Policy, PolicyConfig};

pub const METRICS_FILE: &str = "metrics.csv";
pub const METRICS_HEADER: &str =
    "update,frames,mean_return,completion_rate,policy_loss,value_loss,entropy,clip_fraction,aux_depth_loss,l2_term";

/// Finished episodes averaged into the per-update return and completion.
const EPISODE_WINDOW: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub update: u64,
    pub frames: u64,
    pub mean_return: f64,
    pub completion_rate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub aux_depth_loss: f64,
    pub l2_term: f64,
}

impl MetricsRow {
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.update,
            self.frames,
            self.mean_return,
            self.completion_rate,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.clip_fraction,
            self.aux_depth_loss,
            self.l2_term
        )
    }

    fn parse(line: &str) -> Option<MetricsRow> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return None;
        }
        let x = |i: usize| f[i].trim().parse::<f64>().ok();
        Some(MetricsRow {
            update: f[0].trim().parse().ok()?,
            frames: f[1].trim().parse().ok()?,
            mean_return: x(2)?,
            completion_rate: x(3)?,
            policy_loss: x(4)?,
            value_loss: x(5)?,
            entropy: x(6)?,
            clip_fraction: x(7)?,
            aux_depth_loss: x(8)?,
            l2_term: x(9)?,
        })
    }
}

/// Rows of a metrics CSV.
pub fn read_metrics(path: &Path) -> std::io::Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().skip(1).filter_map(MetricsRow::parse).collect())
}

/// Everything a training run needs, resolved from a run config.
#[derive(Debug, Clone)]
pub struct TrainSetup {
    pub model_id: String,
    pub env: Env,
    pub tracks: Vec<Arc<Track>>,
    pub policy: PolicyConfig,
    pub ppo: PpoConfig,
    pub seed: u64,
    pub total_frames: u64,
    /// Checkpoint period in updates; the final checkpoint is always written.
    pub checkpoint_every: u64,
    /// Weights to start from (fine-tuning); counters start at zero.
    pub init_checkpoint: Option<PathBuf>,
}

/// Called after each update with its metrics row and the episodes it
/// finished; returning false stops training.
pub type UpdateCallback<'a> = &'a mut dyn FnMut(&MetricsRow, &[EpisodeSummary]) -> bool;

pub struct TrainOptions<'a> {
    pub out_dir: PathBuf,
    /// Continue a run: weights and update/frame counters come from here.
    pub resume: Option<PathBuf>,
    pub threads: usize,
    pub on_update: Option<UpdateCallback<'a>>,
}

impl<'a> TrainOptions<'a> {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        TrainOptions { out_dir: out_dir.into(), resume: None, threads: 1, on_update: None }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub updates: u64,
    pub frames: u64,
    pub metrics: Vec<MetricsRow>,
    pub checkpoints: Vec<PathBuf>,
    pub final_checkpoint: PathBuf,
    pub episodes: Vec<EpisodeSummary>,
}

pub fn checkpoint_name(update: u64) -> String {
    format!("update_{update:06}.ckpt")
}

fn io_err(path: &Path, updates: u64) -> impl FnOnce(std::io::Error) -> LearnError + '_ {
    move |source| LearnError::Io { path: path.display().to_string(), updates, source }
}

fn policy_io(e: crate::policy::PolicyError, path: &Path, updates: u64) -> LearnError {
    match e {
        crate::policy::PolicyError::Ad(crate::autodiff::AdError::Io(source)) => {
            LearnError::Io { path: path.display().to_string(), updates, source: std::io::Error::other(source) }
        }
        other => LearnError::Policy(other),
    }
}

/// Collect, estimate advantages, update; repeated until `total_frames`.
/// Writes `metrics.csv`, periodic checkpoints under `checkpoints/` and
/// `final.ckpt` into the output directory.
pub fn train(setup: &TrainSetup, opts: TrainOptions<'_>) -> Result<TrainOutcome, LearnError> {
    setup.ppo.validate().map_err(LearnError::Config)?;
    setup.policy.validate().map_err(LearnError::Config)?;
    if setup.tracks.is_empty() {
        return Err(LearnError::Config("no training scenarios".into()));
    }
    let TrainOptions { out_dir, resume, threads, mut on_update } = opts;
    let ckpt_dir = out_dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(io_err(&ckpt_dir, 0))?;

    let cam = &setup.env.camera;
    let mut init_rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let mut policy: Policy<f32> = Policy::new(&setup.policy, cam.width, cam.height, &mut init_rng)?;
    let (mut update, mut frames) = (0u64, 0u64);
    if let Some(path) = &resume {
        let (p, meta) = Policy::load_matching(path, &policy).map_err(|e| policy_io(e, path, 0))?;
        policy = p;
        update = meta["update"].as_u64().unwrap_or(0);
        frames = meta["frames"].as_u64().unwrap_or(0);
    } else if let Some(path) = &setup.init_checkpoint {
        policy = Policy::load_matching(path, &policy).map_err(|e| policy_io(e, path, 0))?.0;
    }

    let metrics_path = out_dir.join(METRICS_FILE);
    let mut metrics: Vec<MetricsRow> = if resume.is_some() && metrics_path.exists() {
        read_metrics(&metrics_path).map_err(io_err(&metrics_path, update))?.into_iter().filter(|r| r.update <= update).collect()
    } else {
        vec![]
    };
    {
        let mut text = String::from(METRICS_HEADER);
        text.push('\n');
        for r in &metrics {
            text.push_str(&r.csv());
            text.push('\n');
        }
        fs::write(&metrics_path, text).map_err(io_err(&metrics_path, update))?;
    }

    let ppo = &setup.ppo;
    let pool = Workers::new(crate::par::effective_threads(threads));
    let stream = setup.seed ^ update.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let mut workers: Vec<RolloutWorker<f32>> = worker_seeds(stream, ppo.workers).into_iter().map(RolloutWorker::new).collect();
    let mut adam = Adam::new(&policy.params());
    let mut scaler = RewardScaler::new(ppo.workers, ppo.gamma);
    let mut window: VecDeque<EpisodeSummary> = VecDeque::new();
    let mut episodes = Vec::new();
    let mut checkpoints = Vec::new();
    let meta = |update: u64, frames: u64| json!({ "model_id": setup.model_id, "update": update, "frames": frames, "seed": setup.seed });

    while frames < setup.total_frames {
        let mut batch = collect_rollout(&setup.env, &setup.tracks, &policy, &mut workers, ppo.n_step, &pool)?;
        frames += batch.len() as u64;
        update += 1;
        for e in batch.finished() {
            window.push_back(e.clone());
            if window.len() > EPISODE_WINDOW {
                window.pop_front();
            }
        }
        let finished: Vec<EpisodeSummary> = batch.finished().cloned().collect();
        if ppo.reward_norm {
            let mut rewards: Vec<Vec<f64>> = batch.workers.iter().map(|w| w.transitions.iter().map(|t| t.reward).collect()).collect();
            let dones: Vec<Vec<bool>> = batch.workers.iter().map(|w| w.transitions.iter().map(|t| t.done).collect()).collect();
            scaler.scale(&mut rewards, &dones);
            for (w, r) in batch.workers.iter_mut().zip(rewards) {
                w.transitions.iter_mut().zip(r).for_each(|(t, x)| t.reward = x);
            }
        }
        prepare_batch(&mut batch, ppo)?;
        let mut rng = ChaCha8Rng::seed_from_u64(setup.seed.wrapping_add(update.wrapping_mul(0x2545_f491_4f6c_dd1d)));
        let stats: LossStats = ppo_update(&mut policy, &mut adam, &batch, ppo, &mut rng, &pool)?;
        let n = window.len() as f64;
        let row = MetricsRow {
            update,
            frames,
            mean_return: window.iter().map(|e| e.total_reward).sum::<f64>() / n,
            completion_rate: window.iter().filter(|e| e.completed()).count() as f64 / n,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_fraction: stats.clip_fraction,
            aux_depth_loss: stats.aux_depth_loss,
            l2_term: stats.l2_term,
        };
        let mut f = fs::OpenOptions::new().append(true).open(&metrics_path).map_err(io_err(&metrics_path, update))?;
        writeln!(f, "{}", row.csv()).map_err(io_err(&metrics_path, update))?;
        metrics.push(row);
        episodes.extend(finished.iter().cloned());
        if setup.checkpoint_every > 0 && update % setup.checkpoint_every == 0 {
            let path = ckpt_dir.join(checkpoint_name(update));
            policy.save(&path, meta(update, frames)).map_err(|e| policy_io(e, &path, update))?;
            checkpoints.push(path);
        }
        if let Some(cb) = on_update.as_mut() {
            if !cb(&row, &finished) {
                break;
            }
        }
    }
    let final_checkpoint = out_dir.join("final.ckpt");
    policy.save(&final_checkpoint, meta(update, frames)).map_err(|e| policy_io(e, &final_checkpoint, update))?;
    Ok(TrainOutcome { updates: update, frames, metrics, checkpoints, final_checkpoint, episodes })
}

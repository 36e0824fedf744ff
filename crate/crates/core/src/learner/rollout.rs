use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LearnError;
use crate::autodiff::Real;
use crate::env::{Env, EnvAction, Episode, Termination, Track};
use crate::par::Workers;
use crate::policy::{Action, Policy, PolicyInput};
use crate::sensor::Observation;

/// One environment step as seen by the learner.
#[derive(Debug, Clone)]
pub struct Transition<T> {
    pub input: PolicyInput<T>,
    pub action: Action,
    /// Log probability of `action` under the rollout-time policy.
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
    pub depth_target: Option<Vec<f64>>,
    /// Recurrent state entering this step.
    pub hidden: Option<Vec<T>>,
}

/// Outcome of a finished training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub scenario: String,
    pub total_reward: f64,
    pub termination: Termination,
    pub frames: usize,
    pub mean_abs_lateral: f64,
}

impl EpisodeSummary {
    pub fn completed(&self) -> bool {
        self.termination == Termination::Completed
    }
}

/// `n_step` consecutive transitions from one worker.
#[derive(Debug, Clone)]
pub struct WorkerRollout<T> {
    pub transitions: Vec<Transition<T>>,
    /// Value of the state after the last transition.
    pub bootstrap_value: f64,
    pub finished: Vec<EpisodeSummary>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RolloutBatch<T> {
    pub workers: Vec<WorkerRollout<T>>,
}

impl<T> RolloutBatch<T> {
    pub fn len(&self) -> usize {
        self.workers.iter().map(|w| w.transitions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn finished(&self) -> impl Iterator<Item = &EpisodeSummary> {
        self.workers.iter().flat_map(|w| w.finished.iter())
    }
}

/// A live episode owned by one rollout worker.
#[derive(Debug, Clone)]
pub struct RolloutWorker<T> {
    pub rng: ChaCha8Rng,
    pub episode: Option<Episode>,
    pub observation: Option<Observation>,
    pub hidden: Option<Vec<T>>,
    total_reward: f64,
    lateral_sum: f64,
}

impl<T: Real> RolloutWorker<T> {
    pub fn new(seed: u64) -> Self {
        RolloutWorker {
            rng: ChaCha8Rng::seed_from_u64(seed),
            episode: None,
            observation: None,
            hidden: None,
            total_reward: 0.0,
            lateral_sum: 0.0,
        }
    }

    fn start(&mut self, env: &Env, tracks: &[Arc<Track>], policy: &Policy<T>) -> Result<(), LearnError> {
        let track = tracks[self.rng.random_range(0..tracks.len())].clone();
        let (obs, ep) = env.reset(track, &mut self.rng)?;
        self.episode = Some(ep);
        self.observation = Some(obs);
        self.hidden = policy.initial_hidden();
        self.total_reward = 0.0;
        self.lateral_sum = 0.0;
        Ok(())
    }
}

/// Independent seeds for `n` workers derived from one run seed.
pub fn worker_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0072_6f6c_6c6f_7574);
    (0..n).map(|_| rng.random()).collect()
}

/// Steps every worker `n_step` times with the frozen `policy`, resetting
/// episodes as they finish. Workers run concurrently; each owns its
/// episode and random stream, so results do not depend on scheduling.
pub fn collect_rollout<T: Real + Send + Sync>(
    env: &Env,
    tracks: &[Arc<Track>],
    policy: &Policy<T>,
    workers: &mut [RolloutWorker<T>],
    n_step: usize,
    pool: &Workers,
) -> Result<RolloutBatch<T>, LearnError> {
    if tracks.is_empty() {
        return Err(LearnError::Config("no training scenarios".into()));
    }
    let results = pool.map_mut(workers, |_, w| collect_worker(env, tracks, policy, w, n_step));
    Ok(RolloutBatch { workers: results.into_iter().collect::<Result<_, _>>()? })
}

fn collect_worker<T: Real>(
    env: &Env,
    tracks: &[Arc<Track>],
    policy: &Policy<T>,
    w: &mut RolloutWorker<T>,
    n_step: usize,
) -> Result<WorkerRollout<T>, LearnError> {
    if w.episode.is_none() {
        w.start(env, tracks, policy)?;
    }
    let cfg = &policy.cfg;
    let values = cfg.action_values();
    let mut transitions = Vec::with_capacity(n_step);
    let mut finished = Vec::new();
    for _ in 0..n_step {
        let obs = w.observation.take().expect("worker has an observation");
        let input = PolicyInput::from_observation(&obs, cfg.semseg_only);
        let (out, _) = policy.forward(&input, w.hidden.as_deref())?;
        let action = out.dist.sample(&values, &mut w.rng);
        let log_prob = out.dist.log_prob(&action).f64();
        let ep = w.episode.as_mut().expect("worker has an episode");
        let depth_target = cfg.aux_depth.then(|| env.depth_target(ep, cfg.depth_rays, cfg.depth_max_range));
        let steering = cfg.to_steering(&action, &env.vehicle);
        let step = env.step(ep, EnvAction::Steering(steering))?;
        w.total_reward += step.reward;
        w.lateral_sum += step.info.lateral.abs();
        transitions.push(Transition {
            input,
            action,
            log_prob,
            value: out.value.f64(),
            reward: step.reward,
            done: step.done,
            depth_target,
            hidden: w.hidden.take(),
        });
        if step.done {
            finished.push(EpisodeSummary {
                scenario: ep.track.scenario.name.clone(),
                total_reward: w.total_reward,
                termination: step.info.termination,
                frames: ep.steps,
                mean_abs_lateral: w.lateral_sum / ep.steps as f64,
            });
            w.start(env, tracks, policy)?;
        } else {
            w.observation = Some(step.observation);
            w.hidden = out.hidden;
        }
    }
    let obs = w.observation.as_ref().expect("worker has an observation");
    let (last, _) = policy.forward(&PolicyInput::from_observation(obs, cfg.semseg_only), w.hidden.as_deref())?;
    Ok(WorkerRollout { transitions, bootstrap_value: last.value.f64(), finished, advantages: vec![], returns: vec![] })
}

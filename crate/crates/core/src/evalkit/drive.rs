use std::path::PathBuf;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DriveLog, EvalError, Frame};
use crate::env::{pure_pursuit_steering, Env, EnvAction, Episode, Termination, Track, EXPERT_LOOKAHEAD};
use crate::par::Workers;
use crate::policy::{Policy, PolicyInput};
use crate::sensor::Observation;

/// Automatic stand-in for a human safety driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterventionPolicy {
    /// Take over when |lateral| exceeds this (meters).
    pub takeover_lateral: f64,
    /// Take over when the footprint leaves drivable space.
    pub takeover_offroad: bool,
    /// Arclength the scripted driver covers after the last trigger before
    /// handing control back.
    pub resume_window: f64,
}

impl Default for InterventionPolicy {
    fn default() -> Self {
        InterventionPolicy { takeover_lateral: 1.5, takeover_offroad: true, resume_window: 10.0 }
    }
}

impl InterventionPolicy {
    pub fn validate(&self, divergence_limit: f64) -> Result<(), String> {
        if !(self.takeover_lateral > 0.0 && self.takeover_lateral < divergence_limit) {
            return Err(format!(
                "intervention.takeover_lateral must lie in (0, divergence_limit = {divergence_limit}), got {}",
                self.takeover_lateral
            ));
        }
        if !(self.resume_window >= 0.0 && self.resume_window.is_finite()) {
            return Err("intervention.resume_window must be a finite non-negative distance".into());
        }
        Ok(())
    }

    pub fn triggers(&self, lateral: f64, offroad: bool) -> bool {
        lateral.abs() > self.takeover_lateral || (self.takeover_offroad && offroad)
    }
}

/// Takeover state machine: control passes to the scripted driver on a
/// trigger and returns once the car is `resume_window` meters past the last
/// trigger.
#[derive(Debug, Clone, Copy)]
pub struct SafetyDriver {
    rule: InterventionPolicy,
    active: bool,
    until: f64,
}

impl SafetyDriver {
    pub fn new(rule: InterventionPolicy) -> Self {
        SafetyDriver { rule, active: false, until: f64::NEG_INFINITY }
    }

    /// Whether the scripted driver controls the car in this state.
    pub fn update(&mut self, lateral: f64, offroad: bool, arclength: f64) -> bool {
        let trigger = self.rule.triggers(lateral, offroad);
        if trigger {
            self.until = arclength + self.rule.resume_window;
        }
        self.active = trigger || (self.active && arclength < self.until);
        self.active
    }
}

/// Intervention flags the takeover rule implies for recorded frames.
pub fn derive_interventions(frames: &[Frame], rule: InterventionPolicy) -> Vec<bool> {
    let mut sd = SafetyDriver::new(rule);
    frames.iter().map(|f| sd.update(f.lateral, f.offroad, f.arclength)).collect()
}

/// Everything besides the driver that determines an evaluation drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSetup {
    pub env: Env,
    pub intervention: InterventionPolicy,
    /// Step budget as a multiple of the route's nominal driving time.
    pub time_limit_factor: f64,
    /// Store rendered observations in the log (needed for offline replay
    /// and saliency).
    pub record_observations: bool,
}

impl Default for EvalSetup {
    fn default() -> Self {
        let mut env = Env::new(Default::default(), crate::sensor::CameraConfig::desk());
        env.training = false;
        EvalSetup { env, intervention: InterventionPolicy::default(), time_limit_factor: 3.0, record_observations: false }
    }
}

impl EvalSetup {
    pub fn new(mut env: Env) -> Self {
        env.training = false;
        EvalSetup { env, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.env.cfg.validate()?;
        self.intervention.validate(self.env.cfg.divergence_limit)?;
        if !(self.time_limit_factor >= 1.0) {
            return Err("time_limit_factor must be at least 1".into());
        }
        Ok(())
    }

    fn env_for(&self, track: &Track) -> Env {
        let mut env = self.env.clone();
        env.training = false;
        let nominal = track.route.path.total_length / (env.vehicle.target_speed * env.cfg.dt);
        let budget = (self.time_limit_factor * nominal).ceil() as usize;
        env.cfg.max_episode_steps = env.cfg.max_episode_steps.max(budget);
        env
    }
}

/// Serializable description of a driver, stored in log headers so drives
/// can be re-simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriverSpec {
    Expert { lookahead: f64 },
    NoisyExpert { lookahead: f64, noise_std: f64, seed: u64 },
    Constant { steering: f64 },
    Checkpoint { path: PathBuf },
}

impl DriverSpec {
    pub fn expert() -> Self {
        DriverSpec::Expert { lookahead: EXPERT_LOOKAHEAD }
    }

    pub fn build(&self) -> Result<Box<dyn Driver>, EvalError> {
        Ok(match self {
            DriverSpec::Expert { lookahead } => Box::new(ExpertDriver { lookahead: *lookahead }),
            DriverSpec::NoisyExpert { lookahead, noise_std, seed } => Box::new(NoisyExpertDriver::new(*lookahead, *noise_std, *seed)),
            DriverSpec::Constant { steering } => Box::new(ConstantDriver(*steering)),
            DriverSpec::Checkpoint { path } => {
                let (policy, _) = Policy::<f32>::load(path).map_err(|e| EvalError::Checkpoint(format!("{}: {e}", path.display())))?;
                Box::new(NetworkDriver::new(Arc::new(policy)))
            }
        })
    }

    /// Default model id for logs and reports.
    pub fn model_id(&self) -> String {
        match self {
            DriverSpec::Expert { .. } => "EXPERT".into(),
            DriverSpec::NoisyExpert { noise_std, .. } => format!("EXPERT-NOISE-{noise_std}"),
            DriverSpec::Constant { steering } => format!("CONSTANT-{steering}"),
            DriverSpec::Checkpoint { path } => path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        }
    }
}

/// Something that steers the car in evaluation. Drivers are deterministic
/// given the seed passed to `reset`.
pub trait Driver: Send {
    fn reset(&mut self, seed: u64);
    /// Steering command (radians) for the current state and observation.
    fn act(&mut self, env: &Env, ep: &Episode, obs: &Observation) -> Result<f64, EvalError>;
    /// Policy configuration, when the driver is a network.
    fn policy_semseg_only(&self) -> Option<bool> {
        None
    }
}

/// Pure pursuit on the reference path with privileged state.
#[derive(Debug, Clone, Copy)]
pub struct ExpertDriver {
    pub lookahead: f64,
}

impl Driver for ExpertDriver {
    fn reset(&mut self, _seed: u64) {}

    fn act(&mut self, env: &Env, ep: &Episode, _obs: &Observation) -> Result<f64, EvalError> {
        Ok(pure_pursuit_steering(&ep.track.route.path, &ep.vehicle, ep.arclength, self.lookahead, &env.vehicle))
    }
}

/// Expert plus white Gaussian steering noise.
#[derive(Debug, Clone)]
pub struct NoisyExpertDriver {
    expert: ExpertDriver,
    noise: Normal<f64>,
    seed: u64,
    rng: ChaCha8Rng,
}

impl NoisyExpertDriver {
    pub fn new(lookahead: f64, noise_std: f64, seed: u64) -> Self {
        NoisyExpertDriver {
            expert: ExpertDriver { lookahead },
            noise: Normal::new(0.0, noise_std.abs()).expect("finite std"),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Driver for NoisyExpertDriver {
    fn reset(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed ^ seed);
    }

    fn act(&mut self, env: &Env, ep: &Episode, obs: &Observation) -> Result<f64, EvalError> {
        let s = self.expert.act(env, ep, obs)? + self.noise.sample(&mut self.rng);
        let limit = env.vehicle.max_steering_angle;
        Ok(s.clamp(-limit, limit))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantDriver(pub f64);

impl Driver for ConstantDriver {
    fn reset(&mut self, _seed: u64) {}

    fn act(&mut self, _env: &Env, _ep: &Episode, _obs: &Observation) -> Result<f64, EvalError> {
        Ok(self.0)
    }
}

/// A policy network in deterministic mode.
#[derive(Debug, Clone)]
pub struct NetworkDriver {
    pub policy: Arc<Policy<f32>>,
    hidden: Option<Vec<f32>>,
}

impl NetworkDriver {
    pub fn new(policy: Arc<Policy<f32>>) -> Self {
        let hidden = policy.initial_hidden();
        NetworkDriver { policy, hidden }
    }

    /// Deterministic steering for one observation, advancing the recurrent
    /// state.
    pub fn steer(&mut self, obs: &Observation, vehicle: &crate::vehicle::VehicleParams) -> Result<f64, EvalError> {
        let cfg = &self.policy.cfg;
        let input = PolicyInput::from_observation(obs, cfg.semseg_only);
        let (out, _) = self.policy.forward(&input, self.hidden.as_deref()).map_err(|e| EvalError::Checkpoint(e.to_string()))?;
        self.hidden = out.hidden;
        Ok(cfg.to_steering(&out.dist.mode_action(&cfg.action_values()), vehicle))
    }
}

impl Driver for NetworkDriver {
    fn reset(&mut self, _seed: u64) {
        self.hidden = self.policy.initial_hidden();
    }

    fn act(&mut self, env: &Env, _ep: &Episode, obs: &Observation) -> Result<f64, EvalError> {
        self.steer(obs, &env.vehicle)
    }

    fn policy_semseg_only(&self) -> Option<bool> {
        Some(self.policy.cfg.semseg_only)
    }
}

/// Seed of trial `trial` derived from a base seed.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base ^ (trial as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// One closed-loop drive with the safety driver watching. Every visited
/// state becomes a frame; collisions and divergence hand control to the
/// scripted driver instead of ending the drive.
pub fn drive(setup: &EvalSetup, track: Arc<Track>, driver: &mut dyn Driver, model: &str, seed: u64) -> Result<DriveLog, EvalError> {
    let mut env = setup.env_for(&track);
    if let Some(semseg) = driver.policy_semseg_only() {
        env.semseg_only = semseg;
    }
    let mut expert = ExpertDriver { lookahead: EXPERT_LOOKAHEAD };
    let mut log = DriveLog::new(&track.scenario.name, model, seed);
    let (mut obs, mut ep) = env.reset(track, &mut ChaCha8Rng::seed_from_u64(seed))?;
    driver.reset(seed);
    let mut safety = SafetyDriver::new(setup.intervention);
    let mut offroad = crate::env::footprint_offroad(&ep.track.map, &ep.vehicle, &env.vehicle);
    loop {
        let intervention = safety.update(ep.lateral, offroad, ep.arclength);
        let steering = if intervention { expert.act(&env, &ep, &obs)? } else { driver.act(&env, &ep, &obs)? };
        log.frames.push(Frame {
            t: ep.steps as f64 * env.cfg.dt,
            position: ep.vehicle.position,
            heading: ep.vehicle.heading,
            speed: ep.vehicle.speed,
            commanded_steering: steering,
            applied_steering: ep.vehicle.steering_angle,
            command: obs.command,
            lateral: ep.lateral,
            arclength: ep.arclength,
            offroad,
            intervention,
            observation: setup.record_observations.then(|| obs.clone()),
        });
        if ep.done {
            break;
        }
        let step = env.step(&mut ep, EnvAction::Steering(steering))?;
        offroad = step.info.offroad;
        if matches!(step.info.termination, Termination::Collision | Termination::Diverged) {
            ep.done = false;
        }
        obs = step.observation;
    }
    Ok(log)
}

pub type DriverFactory<'a> = dyn Fn() -> Result<Box<dyn Driver>, EvalError> + Sync + 'a;

/// `trials` drives of one scenario, run concurrently; trial `k` uses
/// [`trial_seed`]`(base_seed, k)`. Headers carry `spec` and `setup` when a
/// spec is given so each drive can be replayed.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_with_safety_driver(
    setup: &EvalSetup,
    track: &Arc<Track>,
    make_driver: &DriverFactory<'_>,
    spec: Option<&DriverSpec>,
    model: &str,
    trials: usize,
    base_seed: u64,
    pool: &Workers,
) -> Result<Vec<DriveLog>, EvalError> {
    let logs = pool.map(trials, |k| {
        let mut driver = make_driver()?;
        let seed = trial_seed(base_seed, k);
        let mut log = drive(setup, track.clone(), driver.as_mut(), model, seed)?;
        log.header.trial = k;
        log.header.driver = spec.cloned();
        log.header.setup = spec.map(|_| setup.clone());
        Ok(log)
    });
    logs.into_iter().collect()
}

/// Queries `policy` open-loop on every recorded observation of `reference`;
/// the car state is copied from the reference, never advanced.
pub fn replay_reference(policy: &Arc<Policy<f32>>, reference: &DriveLog, model: &str) -> Result<DriveLog, EvalError> {
    if !reference.has_observations() {
        return Err(EvalError::MissingObservations);
    }
    let vehicle = reference.header.setup.as_ref().map(|s| s.env.vehicle.clone()).unwrap_or_default();
    let mut driver = NetworkDriver::new(policy.clone());
    let mut log = DriveLog::new(&reference.header.scenario, model, reference.header.seed);
    for f in &reference.frames {
        let obs = f.observation.as_ref().expect("checked above");
        let steering = driver.steer(obs, &vehicle)?;
        log.frames.push(Frame { commanded_steering: steering, observation: None, ..f.clone() });
    }
    Ok(log)
}

/// Outcome of re-simulating a recorded drive.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayCheck {
    pub frames: usize,
    pub resimulated: usize,
    /// First frame whose bits differ (or where one log ends early).
    pub first_mismatch: Option<usize>,
}

impl ReplayCheck {
    pub fn matches(&self) -> bool {
        self.first_mismatch.is_none()
    }
}

/// Re-runs the drive described by `log`'s header and compares every frame
/// bit for bit. `resolve` maps the header's scenario string to a track.
pub fn verify_replay(log: &DriveLog, resolve: &dyn Fn(&str) -> Option<Arc<Track>>) -> Result<ReplayCheck, EvalError> {
    let spec = log.header.driver.as_ref().ok_or_else(|| EvalError::Log("header has no driver; the drive cannot be re-simulated".into()))?;
    let setup = log.header.setup.as_ref().ok_or_else(|| EvalError::Log("header has no setup; the drive cannot be re-simulated".into()))?;
    let track = resolve(&log.header.scenario).ok_or_else(|| EvalError::UnknownScenario(log.header.scenario.clone()))?;
    let mut driver = spec.build()?;
    let again = drive(setup, track, driver.as_mut(), &log.header.model, log.header.seed)?;
    let bits = |f: &Frame| serde_json::to_string(f).expect("frames serialize");
    let n = log.frames.len().max(again.frames.len());
    let first_mismatch = (0..n).find(|&k| match (log.frames.get(k), again.frames.get(k)) {
        (Some(a), Some(b)) => bits(a) != bits(b),
        _ => true,
    });
    Ok(ReplayCheck { frames: log.frames.len(), resimulated: again.frames.len(), first_mismatch })
}

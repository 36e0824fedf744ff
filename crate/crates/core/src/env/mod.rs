//! Episode state machine: reset with randomization draws, then step with
//! reward and termination.

mod expert;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expert::{pure_pursuit_steering, ScriptedExpert, EXPERT_LOOKAHEAD};

use crate::geometry::{polygons_overlap, Aabb, Vec2};
use crate::sensor::{
    assemble_observation, ray_depths, CameraConfig, Observation, Quality, SensorSetup, VisualRandomization, WeatherPreset,
};
use crate::vehicle::{
    sample_dynamics, step as vehicle_step, DynamicsRandomization, SampledDynamics, VehicleError, VehicleParams, VehicleState,
};
use crate::world::{Route, RouteConfig, Scenario, WorldError, WorldMap};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid scenario: {0}")]
    Scenario(#[from] WorldError),
    #[error("env_step called on a finished episode")]
    StepAfterDone,
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub progress: f64,
    pub lateral: f64,
    pub steering_smooth: f64,
    /// Penalty on failure and bonus on completion.
    pub terminal: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights { progress: 1.0, lateral: 0.1, steering_smooth: 0.5, terminal: 100.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomizationToggles {
    pub visual: bool,
    pub dynamics: bool,
    pub weather_pool: bool,
    pub quality_pool: bool,
}

impl Default for RandomizationToggles {
    fn default() -> Self {
        RandomizationToggles { visual: true, dynamics: false, weather_pool: true, quality_pool: true }
    }
}

impl RandomizationToggles {
    pub const OFF: RandomizationToggles = RandomizationToggles { visual: false, dynamics: false, weather_pool: false, quality_pool: false };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Episode fails when |lateral| exceeds this (meters).
    pub divergence_limit: f64,
    pub dt: f64,
    pub max_episode_steps: usize,
    pub reward: RewardWeights,
    pub randomization: RandomizationToggles,
    /// Preset used when the weather pool is off.
    pub fixed_weather: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            divergence_limit: 5.0,
            dt: 0.1,
            max_episode_steps: 1000,
            reward: RewardWeights::default(),
            randomization: RandomizationToggles::default(),
            fixed_weather: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.divergence_limit > 0.0) {
            return Err("env.divergence_limit must be positive".into());
        }
        if !(self.dt > 0.0) {
            return Err("env.dt must be positive".into());
        }
        if self.max_episode_steps == 0 {
            return Err("env.max_episode_steps must be at least 1".into());
        }
        Ok(())
    }
}

/// A scenario resolved against its map.
#[derive(Debug, Clone)]
pub struct Track {
    pub scenario: Scenario,
    pub map: Arc<WorldMap>,
    pub route: Route,
}

impl Track {
    pub fn new(scenario: Scenario, map: Arc<WorldMap>, cfg: &RouteConfig) -> Result<Self, WorldError> {
        scenario.validate()?;
        let route = Route::new(&scenario, &map, cfg)?;
        Ok(Track { scenario, map, route })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    None,
    Collision,
    Diverged,
    Completed,
    Timeout,
}

/// What the policy asks the car to do.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvAction {
    Steering(f64),
    /// Bearing of a waypoint at `radius` meters, converted by pure pursuit.
    Waypoint {
        bearing: f64,
        radius: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub termination: Termination,
    pub arclength: f64,
    pub lateral: f64,
    pub commanded_steering: f64,
    pub applied_steering: f64,
    pub offroad: bool,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Per-episode draws and the evolving car state.
#[derive(Debug, Clone)]
pub struct Episode {
    pub track: Arc<Track>,
    pub vehicle: VehicleState,
    pub dynamics: SampledDynamics,
    pub weather: usize,
    pub quality: Quality,
    /// Furthest arclength reached; progress reward only counts new ground.
    pub progress: f64,
    /// Arclength of the latest projection.
    pub arclength: f64,
    pub lateral: f64,
    pub steps: usize,
    pub done: bool,
    pub prev_command: f64,
    pub rng: ChaCha8Rng,
}

/// Everything needed to run episodes; shared read-only across workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Env {
    pub cfg: EnvConfig,
    pub vehicle: VehicleParams,
    pub dynamics: DynamicsRandomization,
    pub visual: VisualRandomization,
    pub camera: CameraConfig,
    pub semseg_only: bool,
    /// Augment observations (training mode).
    pub training: bool,
}

/// Half-width of the window searched when re-projecting the car.
const PROJECTION_BACK: f64 = 5.0;
const PROJECTION_AHEAD: f64 = 10.0;

impl Default for Env {
    fn default() -> Self {
        Env::new(EnvConfig::default(), CameraConfig::default())
    }
}

impl Env {
    pub fn new(cfg: EnvConfig, camera: CameraConfig) -> Self {
        Env {
            cfg,
            vehicle: VehicleParams::default(),
            dynamics: DynamicsRandomization::default(),
            visual: VisualRandomization::default(),
            camera,
            semseg_only: false,
            training: true,
        }
    }

    pub fn observe(&self, ep: &mut Episode) -> Observation {
        let aug = (self.training && self.cfg.randomization.visual).then_some(&self.visual);
        let preset = self.visual.weather_presets.get(ep.weather).copied().unwrap_or(WeatherPreset::NEUTRAL);
        let setup =
            SensorSetup { camera: &self.camera, preset: &preset, quality: ep.quality, augmentation: aug, semseg_only: self.semseg_only };
        assemble_observation(&ep.track.map, &ep.vehicle, &ep.track.route, ep.arclength, &setup, &ep.dynamics, &mut ep.rng)
    }

    /// Places the car at the first checkpoint facing the second, at its
    /// target speed, and draws weather, quality and dynamics per toggles.
    pub fn reset<R: Rng + ?Sized>(&self, track: Arc<Track>, rng: &mut R) -> Result<(Observation, Episode), EnvError> {
        track.scenario.validate()?;
        let toggles = self.cfg.randomization;
        let mut ep_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let weather = if toggles.weather_pool && !track.scenario.weather_pool.is_empty() {
            track.scenario.weather_pool[ep_rng.random_range(0..track.scenario.weather_pool.len())]
        } else {
            self.cfg.fixed_weather
        };
        let quality = if toggles.quality_pool && ep_rng.random_bool(0.5) { Quality::Epic } else { Quality::Low };
        let dynamics =
            if toggles.dynamics { sample_dynamics(&self.dynamics, &mut ep_rng) } else { SampledDynamics::nominal(&self.vehicle) };
        let cps = &track.scenario.checkpoints;
        let heading = (cps[1] - cps[0]).angle();
        let vehicle = VehicleState::new(cps[0], heading, dynamics.target_speed, &self.vehicle, &dynamics, self.cfg.dt);
        let proj = track.route.path.project_window(vehicle.position, 0.0, PROJECTION_AHEAD);
        let mut ep = Episode {
            track,
            vehicle,
            dynamics,
            weather,
            quality,
            progress: proj.arclength.max(0.0),
            arclength: proj.arclength,
            lateral: proj.lateral,
            steps: 0,
            done: false,
            prev_command: 0.0,
            rng: ep_rng,
        };
        let obs = self.observe(&mut ep);
        Ok((obs, ep))
    }

    pub fn command_to_steering(&self, action: EnvAction) -> f64 {
        match action {
            EnvAction::Steering(s) => s,
            EnvAction::Waypoint { bearing, radius } => {
                crate::policy::waypoint_to_steering(bearing, self.vehicle.wheelbase, radius, self.vehicle.max_steering_angle)
            }
        }
    }

    /// Advances one control tick without rendering an observation.
    pub fn advance(&self, ep: &mut Episode, action: EnvAction) -> Result<(f64, StepInfo), EnvError> {
        if ep.done {
            return Err(EnvError::StepAfterDone);
        }
        let commanded = self.command_to_steering(action);
        ep.vehicle = vehicle_step(&ep.vehicle, commanded, self.cfg.dt, &self.vehicle, &ep.dynamics)?;
        ep.steps += 1;
        let path = &ep.track.route.path;
        let proj = path.project_window(ep.vehicle.position, ep.arclength - PROJECTION_BACK, ep.arclength + PROJECTION_AHEAD);
        ep.arclength = proj.arclength;
        ep.lateral = proj.lateral;
        let gained = (proj.arclength - ep.progress).max(0.0);
        ep.progress += gained;

        let w = &self.cfg.reward;
        let mut reward = w.progress * gained - w.lateral * proj.lateral.abs() - w.steering_smooth * (commanded - ep.prev_command).abs();
        ep.prev_command = commanded;

        let offroad = footprint_offroad(&ep.track.map, &ep.vehicle, &self.vehicle);
        let termination = if offroad {
            Termination::Collision
        } else if proj.lateral.abs() > self.cfg.divergence_limit {
            Termination::Diverged
        } else if ep.arclength >= path.total_length - 1e-9 {
            Termination::Completed
        } else if ep.steps >= self.cfg.max_episode_steps {
            Termination::Timeout
        } else {
            Termination::None
        };
        match termination {
            Termination::Collision | Termination::Diverged => reward -= w.terminal,
            Termination::Completed => reward += w.terminal,
            _ => {}
        }
        ep.done = termination != Termination::None;
        let info = StepInfo {
            termination,
            arclength: ep.arclength,
            lateral: ep.lateral,
            commanded_steering: commanded,
            applied_steering: ep.vehicle.steering_angle,
            offroad,
        };
        Ok((reward, info))
    }

    pub fn step(&self, ep: &mut Episode, action: EnvAction) -> Result<StepResult, EnvError> {
        let (reward, info) = self.advance(ep, action)?;
        let observation = self.observe(ep);
        Ok(StepResult { observation, reward, done: ep.done, info })
    }

    /// Normalized ray distances from the car, used as auxiliary targets.
    pub fn depth_target(&self, ep: &Episode, n_rays: usize, max_range: f64) -> Vec<f64> {
        let pose = self.camera.mount_pose(ep.vehicle.position, ep.vehicle.heading);
        ray_depths(&ep.track.map, &pose, n_rays, max_range)
    }
}

/// True when a footprint corner or edge midpoint leaves drivable space or
/// the body overlaps an obstacle.
pub fn footprint_offroad(map: &WorldMap, state: &VehicleState, params: &VehicleParams) -> bool {
    let fp = state.footprint(params);
    let probes = (0..4).flat_map(|k| [fp[k], fp[k].lerp(fp[(k + 1) % 4], 0.5)]);
    let mut outside = false;
    for p in probes {
        if !map.in_drivable_polygon(p) {
            outside = true;
            break;
        }
    }
    if outside {
        return true;
    }
    let bbox = Aabb::from_points(&fp);
    let (_, obstacles) = map.polygons_near(&bbox);
    obstacles.iter().any(|&i| polygons_overlap(&fp, &map.obstacles()[i]))
}

/// A bundled scenario resolved on its bundled map.
pub fn bundled_track(name: &str) -> Option<Arc<Track>> {
    let sc = crate::world::bundled_scenarios().into_iter().find(|s| s.name == name)?;
    let map = crate::world::bundled_map(&sc.map_id)?;
    Track::new(sc, Arc::new(map), &RouteConfig::default()).ok().map(Arc::new)
}

/// Footprint check at an arbitrary pose (no state needed).
pub fn pose_offroad(map: &WorldMap, position: Vec2, heading: f64, params: &VehicleParams) -> bool {
    let st = VehicleState {
        position,
        heading,
        speed: 0.0,
        accel: 0.0,
        steering_angle: 0.0,
        command_buffer: Default::default(),
        pid: Default::default(),
    };
    footprint_offroad(map, &st, params)
}

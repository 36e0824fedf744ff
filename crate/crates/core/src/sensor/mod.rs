//! Observation rendering: semantic and photometric grids, augmentation,
//! car metrics, command, and auxiliary depth targets.

mod augment;
mod camera;
mod depth;
pub mod pgm;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use augment::{augment, box_blur, cutout_patch, CutoutConfig, VisualRandomization};
pub use camera::{render_photometric, render_semantic, CameraConfig, Pose, Quality, SemClass, SemanticGrid, WeatherPreset};
pub use depth::{ray_bearings, ray_depths, RAY_FAN_HALF_ANGLE};
pub use pgm::{dump_observation, read_pgm, write_pgm, write_ppm};

use crate::vehicle::{observe_metrics, SampledDynamics, VehicleState};
use crate::world::{command_at, Command, Route, WorldMap};

/// Everything the policy sees at one control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub width: usize,
    pub height: usize,
    /// Row-major gray levels in [0, 1].
    pub photometric: Vec<f32>,
    pub semantic: SemanticGrid,
    pub speed: f64,
    pub accel: f64,
    pub steering_angle: f64,
    pub command: Command,
}

impl Observation {
    pub fn command_one_hot(&self) -> [f32; 4] {
        self.command.one_hot()
    }

    pub fn is_valid(&self) -> bool {
        let n = self.width * self.height;
        self.photometric.len() == n && self.semantic.classes.len() == n && self.photometric.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// How observations are rendered for one episode.
#[derive(Debug, Clone, Copy)]
pub struct SensorSetup<'a> {
    pub camera: &'a crate::sensor::CameraConfig,
    pub preset: &'a WeatherPreset,
    pub quality: Quality,
    /// Present only in training mode.
    pub augmentation: Option<&'a VisualRandomization>,
    pub semseg_only: bool,
}

/// Renders both channels at the camera mount, augments in training mode,
/// attaches noisy car metrics and the route command at `arclength`.
pub fn assemble_observation<R: Rng + ?Sized>(
    map: &WorldMap,
    state: &VehicleState,
    route: &Route,
    arclength: f64,
    setup: &SensorSetup<'_>,
    dynamics: &SampledDynamics,
    rng: &mut R,
) -> Observation {
    let cam = CameraConfig { quality: setup.quality, ..setup.camera.clone() };
    let pose = cam.mount_pose(state.position, state.heading);
    let semantic = render_semantic(map, &pose, &cam);
    let photometric = camera::photometric_from(map, &pose, &cam, &semantic, setup.preset, rng);
    let metrics = observe_metrics(state, dynamics, rng);
    let mut obs = Observation {
        width: cam.width,
        height: cam.height,
        photometric,
        semantic,
        speed: metrics.speed,
        accel: metrics.accel,
        steering_angle: metrics.steering_angle,
        command: command_at(route, arclength),
    };
    if let Some(aug) = setup.augmentation {
        obs = augment(&obs, aug, rng);
    }
    if setup.semseg_only {
        obs.photometric.iter_mut().for_each(|v| *v = 0.0);
    }
    obs
}

#[cfg(test)]
mod tests;

//! Policy/value network with optional command-branched heads, the action
//! spaces, and the waypoint low-level controller.

mod dist;
mod net;

use serde::{Deserialize, Serialize};

pub use dist::{softmax, Action, Dist, DistGrad};
pub use net::{OutputGrad, Policy, PolicyCache, PolicyError, PolicyInput, PolicyOutput};

use crate::vehicle::VehicleParams;

/// Steering atoms in radians; denser around zero.
pub const DISCRETE_ATOMS: [f64; 23] = [
    -0.4, -0.3, -0.25, -0.2, -0.15, -0.12, -0.08, -0.05, -0.03, -0.02, -0.01, 0.0, 0.01, 0.02, 0.03, 0.05, 0.08, 0.12, 0.15, 0.2, 0.25,
    0.3, 0.4,
];

/// Scalars appended to the image features: speed, acceleration and steering
/// angle, divided by these scales.
pub const METRIC_SCALES: [f64; 3] = [10.0, 5.0, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpace {
    Continuous,
    Discrete,
    WaypointDiscrete,
    WaypointContinuous,
}

impl ActionSpace {
    pub fn is_waypoint(self) -> bool {
        matches!(self, ActionSpace::WaypointDiscrete | ActionSpace::WaypointContinuous)
    }

    pub fn is_categorical(self) -> bool {
        matches!(self, ActionSpace::Discrete | ActionSpace::WaypointDiscrete)
    }
}

/// Waypoints on a circle of `radius` at bearings every `angle_step_deg`
/// within `±max_angle_deg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaypointSpace {
    pub radius: f64,
    pub angle_step_deg: f64,
    pub max_angle_deg: f64,
}

impl Default for WaypointSpace {
    fn default() -> Self {
        WaypointSpace { radius: 5.0, angle_step_deg: 5.0, max_angle_deg: 30.0 }
    }
}

impl WaypointSpace {
    /// Bearings in radians, ascending, symmetric about zero.
    pub fn bearings(&self) -> Vec<f64> {
        let n = (self.max_angle_deg / self.angle_step_deg).round() as i64;
        (-n..=n).map(|k| (k as f64 * self.angle_step_deg).to_radians()).collect()
    }

    pub fn max_bearing(&self) -> f64 {
        self.max_angle_deg.to_radians()
    }
}

/// Pure pursuit toward the waypoint at `bearing` on the lookahead circle.
pub fn waypoint_to_steering(bearing: f64, wheelbase: f64, radius: f64, max_steering_angle: f64) -> f64 {
    (2.0 * wheelbase * bearing.sin() / radius).atan().clamp(-max_steering_angle, max_steering_angle)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractorPreset {
    /// Two conv blocks (16 and 32 channels, 3x3, halved by max-pooling) and
    /// a 256-unit dense layer.
    ImpalaSmall,
    /// One 4x4 stride-4 conv with 8 channels, a 2x2 pool and 64 dense units.
    Desk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub action_space: ActionSpace,
    pub branched: bool,
    pub recurrent: bool,
    pub aux_depth: bool,
    pub semseg_only: bool,
    pub extractor: ExtractorPreset,
    pub waypoint: WaypointSpace,
    pub depth_rays: usize,
    pub depth_max_range: f64,
    /// Initial log standard deviation of Gaussian heads.
    pub init_log_std: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            action_space: ActionSpace::Continuous,
            branched: false,
            recurrent: false,
            aux_depth: false,
            semseg_only: false,
            extractor: ExtractorPreset::ImpalaSmall,
            waypoint: WaypointSpace::default(),
            depth_rays: 16,
            depth_max_range: 20.0,
            init_log_std: 0.1f64.ln(),
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.action_space.is_waypoint() {
            let w = &self.waypoint;
            if !(w.radius > 0.0 && w.angle_step_deg > 0.0 && w.max_angle_deg > 0.0) {
                return Err("waypoint radius, angle step and range must be positive".into());
            }
            if w.max_angle_deg >= 90.0 {
                return Err("waypoint bearings must stay within ±90 degrees".into());
            }
        }
        if self.aux_depth && (self.depth_rays == 0 || self.depth_max_range <= 0.0) {
            return Err("aux depth needs at least one ray and a positive range".into());
        }
        Ok(())
    }

    /// Values attached to categorical outputs: atoms or bearings.
    pub fn action_values(&self) -> Vec<f64> {
        match self.action_space {
            ActionSpace::Discrete => DISCRETE_ATOMS.to_vec(),
            ActionSpace::WaypointDiscrete => self.waypoint.bearings(),
            _ => vec![],
        }
    }

    pub fn head_outputs(&self) -> usize {
        match self.action_space {
            ActionSpace::Continuous | ActionSpace::WaypointContinuous => 1,
            _ => self.action_values().len(),
        }
    }

    /// Steering command sent to the car for a policy action.
    pub fn to_steering(&self, action: &Action, vehicle: &VehicleParams) -> f64 {
        let limit = vehicle.max_steering_angle;
        match self.action_space {
            ActionSpace::Continuous | ActionSpace::Discrete => action.value.clamp(-limit, limit),
            ActionSpace::WaypointDiscrete | ActionSpace::WaypointContinuous => {
                let b = action.value.clamp(-self.waypoint.max_bearing(), self.waypoint.max_bearing());
                waypoint_to_steering(b, vehicle.wheelbase, self.waypoint.radius, limit)
            }
        }
    }

    /// Architecture part of the model identity.
    pub fn arch_name(&self) -> String {
        let base = match self.action_space {
            ActionSpace::Continuous => "CONTINUOUS",
            ActionSpace::Discrete => "DISCRETE",
            ActionSpace::WaypointDiscrete => "WAYPOINTS-DISCRETE",
            ActionSpace::WaypointContinuous => "WAYPOINTS-CONTINUOUS",
        };
        let mut s = base.to_string();
        if self.branched {
            s.push_str("-BRANCHED");
        }
        if self.recurrent {
            s.push_str("-RNN");
        }
        if self.aux_depth {
            s.push_str("-AUXDEPTH");
        }
        if self.semseg_only {
            s.push_str("-SEMSEG");
        }
        s
    }
}

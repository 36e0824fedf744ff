use crate::geometry::{wrap_angle, Vec2};
use crate::vehicle::{VehicleParams, VehicleState};
use crate::world::ReferencePath;

/// Lookahead distance of the scripted driver (meters along the path).
pub const EXPERT_LOOKAHEAD: f64 = 6.0;

/// Pure-pursuit steering toward the path point `lookahead` meters past the
/// car's projection at `arclength`.
pub fn pure_pursuit_steering(path: &ReferencePath, state: &VehicleState, arclength: f64, lookahead: f64, params: &VehicleParams) -> f64 {
    let target = if arclength + lookahead <= path.total_length {
        path.point_at(arclength + lookahead)
    } else {
        // Extend straight past the end so the car keeps its line.
        let end = path.point_at(path.total_length);
        end + Vec2::from_angle(path.heading_at(path.total_length)) * (arclength + lookahead - path.total_length)
    };
    let d = target - state.position;
    let alpha = wrap_angle(d.angle() - state.heading);
    let dist = d.norm().max(1e-6);
    (2.0 * params.wheelbase * alpha.sin() / dist).atan().clamp(-params.max_steering_angle, params.max_steering_angle)
}

/// Scripted driver that follows the reference path by pure pursuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptedExpert {
    pub lookahead: f64,
}

impl Default for ScriptedExpert {
    fn default() -> Self {
        ScriptedExpert { lookahead: EXPERT_LOOKAHEAD }
    }
}

impl ScriptedExpert {
    pub fn steer(&self, path: &ReferencePath, state: &VehicleState, arclength: f64, params: &VehicleParams) -> f64 {
        pure_pursuit_steering(path, state, arclength, self.lookahead, params)
    }
}

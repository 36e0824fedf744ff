use serde::{Deserialize, Serialize};

use super::{Command, ReferencePath, Scenario, WorldError, WorldMap};
use crate::geometry::wrap_angle;

/// How intersection annotations turn into commands along a route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouteConfig {
    /// Meters before a decision point at which the command switches on.
    pub command_window: f64,
    /// An intersection counts for a route when the route passes within this distance.
    pub capture_radius: f64,
    /// Distance before/after the decision point used to measure the turn.
    pub turn_probe: f64,
    /// Heading change (radians) separating GO_STRAIGHT from a turn.
    pub turn_threshold: f64,
}

impl Default for RouteConfig {
    fn default() -> Self {
        RouteConfig { command_window: 25.0, capture_radius: 6.0, turn_probe: 12.0, turn_threshold: 30f64.to_radians() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub arclength: f64,
    /// Start of the command window (never before the previous decision).
    pub window_start: f64,
    pub command: Command,
}

/// A scenario resolved against its map: reference path plus command schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub scenario: String,
    pub map_id: String,
    pub path: ReferencePath,
    pub decisions: Vec<Decision>,
}

impl Route {
    pub fn new(scenario: &Scenario, map: &WorldMap, cfg: &RouteConfig) -> Result<Self, WorldError> {
        let path = scenario.reference_path()?;
        let mut decisions: Vec<Decision> = map
            .intersections()
            .iter()
            .filter_map(|ix| {
                let pr = path.project(ix.point);
                if pr.lateral.abs() > cfg.capture_radius {
                    return None;
                }
                let s = pr.arclength;
                let before = path.heading_at((s - cfg.turn_probe).max(0.0));
                let after = path.heading_at((s + cfg.turn_probe).min(path.total_length));
                let turn = wrap_angle(after - before);
                let command = if turn > cfg.turn_threshold {
                    Command::TurnLeft
                } else if turn < -cfg.turn_threshold {
                    Command::TurnRight
                } else {
                    Command::GoStraight
                };
                Some(Decision { arclength: s, window_start: s - cfg.command_window, command })
            })
            .collect();
        decisions.sort_by(|a, b| a.arclength.partial_cmp(&b.arclength).unwrap());
        for i in 1..decisions.len() {
            let prev = decisions[i - 1].arclength;
            if decisions[i].window_start < prev {
                decisions[i].window_start = prev;
            }
        }
        Ok(Route { scenario: scenario.name.clone(), map_id: scenario.map_id.clone(), path, decisions })
    }

    pub fn total_length(&self) -> f64 {
        self.path.total_length
    }
}

/// Command active at `arclength`: the decision's turn inside its window,
/// LANE_FOLLOW everywhere else.
pub fn command_at(route: &Route, arclength: f64) -> Command {
    route
        .decisions
        .iter()
        .find(|d| arclength >= d.window_start && arclength < d.arclength)
        .map(|d| d.command)
        .unwrap_or(Command::LaneFollow)
}

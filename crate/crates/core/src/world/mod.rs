//! Static world model: maps, scenarios, reference paths and navigation
//! commands.

mod bundled;
mod io;
mod map;
mod path;
mod procedural;
mod route;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bundled::{bundled_map, bundled_maps, bundled_scenarios, curb_bug_fixture, RoadBuilder, ROAD_WIDTH};
pub use io::{load_map, load_scenario, save_map, save_scenario, FORMAT_VERSION};
pub use map::{sample_polyline, Intersection, MapData, Marking, MarkingKind, WorldMap, DOUBLE_MARKING_HALF_GAP};
pub use path::{build_reference_path, validate_reference, Projection, ReferencePath, Violation};
pub use procedural::generate_procedural_route;
pub use route::{command_at, Decision, Route, RouteConfig};

use crate::geometry::Vec2;

/// Default sampling step for [`validate_reference`].
pub const DEFAULT_VALIDATION_STEP: f64 = 0.5;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
    #[error("checkpoint {index} duplicates its predecessor")]
    Degenerate { index: usize },
    #[error("map {0} has no lane centerlines")]
    NoLanes(String),
}

impl WorldError {
    pub(crate) fn validation(field: &str, message: impl Into<String>) -> Self {
        WorldError::Validation { field: field.to_string(), message: message.into() }
    }
}

/// High-level navigation command given alongside the observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Command {
    LaneFollow,
    GoStraight,
    TurnRight,
    TurnLeft,
}

impl Command {
    pub const ALL: [Command; 4] = [Command::LaneFollow, Command::GoStraight, Command::TurnRight, Command::TurnLeft];

    pub fn index(self) -> usize {
        match self {
            Command::LaneFollow => 0,
            Command::GoStraight => 1,
            Command::TurnRight => 2,
            Command::TurnLeft => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Command> {
        Command::ALL.get(i).copied()
    }

    pub fn one_hot(self) -> [f32; 4] {
        let mut v = [0.0; 4];
        v[self.index()] = 1.0;
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// A route over a map: ordered checkpoints plus the data split it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub map_id: String,
    pub split: Split,
    #[serde(default)]
    pub weather_pool: Vec<usize>,
    pub checkpoints: Vec<Vec2>,
    /// Optional map location relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_path: Option<String>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.name.is_empty() {
            return Err(WorldError::validation("name", "must not be empty"));
        }
        if self.checkpoints.len() < 2 {
            return Err(WorldError::validation("checkpoints", format!("need at least 2, found {}", self.checkpoints.len())));
        }
        build_reference_path(&self.checkpoints).map(|_| ())
    }

    pub fn reference_path(&self) -> Result<ReferencePath, WorldError> {
        build_reference_path(&self.checkpoints)
    }
}

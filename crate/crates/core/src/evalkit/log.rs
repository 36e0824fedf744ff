use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{DriverSpec, EvalError, EvalSetup};
use crate::geometry::Vec2;
use crate::sensor::{Observation, SemClass, SemanticGrid};
use crate::world::Command;

pub const LOG_FORMAT_VERSION: u32 = 1;

/// First line of a drive log. `driver` and `setup` make the drive
/// re-simulable; logs assembled by hand may omit them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format_version: u32,
    pub scenario: String,
    pub model: String,
    pub seed: u64,
    #[serde(default)]
    pub trial: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver: Option<DriverSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setup: Option<EvalSetup>,
}

/// State of the car at time `t`, the steering commanded there and whether
/// the safety driver was in control. The last frame's command is never
/// executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
    pub commanded_steering: f64,
    pub applied_steering: f64,
    pub command: Command,
    pub lateral: f64,
    pub arclength: f64,
    #[serde(default)]
    pub offroad: bool,
    pub intervention: bool,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "compact_observation")]
    pub observation: Option<Observation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriveLog {
    pub header: LogHeader,
    pub frames: Vec<Frame>,
}

impl DriveLog {
    pub fn new(scenario: &str, model: &str, seed: u64) -> Self {
        DriveLog {
            header: LogHeader {
                format_version: LOG_FORMAT_VERSION,
                scenario: scenario.into(),
                model: model.into(),
                seed,
                trial: 0,
                driver: None,
                setup: None,
            },
            frames: vec![],
        }
    }

    pub fn has_observations(&self) -> bool {
        !self.frames.is_empty() && self.frames.iter().all(|f| f.observation.is_some())
    }

    /// Time must strictly increase; arclength may only drop while the
    /// safety driver is in control.
    pub fn check(&self) -> Result<(), EvalError> {
        for (k, w) in self.frames.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(EvalError::Log(format!("frame {}: time does not increase", k + 1)));
            }
            if w[1].arclength < w[0].arclength - 1e-9 && !w[0].intervention && !w[1].intervention {
                return Err(EvalError::Log(format!("frame {}: arclength decreases outside an intervention", k + 1)));
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), EvalError> {
        let io = |e: std::io::Error| EvalError::Io { path: path.display().to_string(), source: e };
        let mut out = BufWriter::new(fs::File::create(path).map_err(io)?);
        writeln!(out, "{}", json_line(&self.header)).map_err(io)?;
        for f in &self.frames {
            writeln!(out, "{}", json_line(f)).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<DriveLog, EvalError> {
        let io = |e: std::io::Error| EvalError::Io { path: path.display().to_string(), source: e };
        let file = fs::File::open(path).map_err(io)?;
        let mut lines = BufReader::new(file).lines();
        let bad = |line: usize, e: serde_json::Error| EvalError::Log(format!("{}:{line}: {e}", path.display()));
        let first = lines.next().ok_or_else(|| EvalError::Log(format!("{}: empty log", path.display())))?.map_err(io)?;
        let header: LogHeader = serde_json::from_str(&first).map_err(|e| bad(1, e))?;
        if header.format_version != LOG_FORMAT_VERSION {
            return Err(EvalError::Log(format!("{}: unsupported format_version {}", path.display(), header.format_version)));
        }
        let mut frames = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            frames.push(serde_json::from_str(&line).map_err(|e| bad(i + 2, e))?);
        }
        Ok(DriveLog { header, frames })
    }
}

fn json_line<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("log records serialize")
}

/// Observations inside logs: gray levels as base64 little-endian f32 and
/// classes as one digit per cell.
mod compact_observation {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Stored {
        width: usize,
        height: usize,
        photometric: String,
        semantic: String,
        speed: f64,
        accel: f64,
        steering_angle: f64,
        command: Command,
    }

    pub fn serialize<S: Serializer>(obs: &Option<Observation>, s: S) -> Result<S::Ok, S::Error> {
        let Some(o) = obs else { return s.serialize_none() };
        let bytes: Vec<u8> = o.photometric.iter().flat_map(|v| v.to_le_bytes()).collect();
        Stored {
            width: o.width,
            height: o.height,
            photometric: STANDARD.encode(bytes),
            semantic: o.semantic.classes.iter().map(|c| char::from(b'0' + *c as u8)).collect(),
            speed: o.speed,
            accel: o.accel,
            steering_angle: o.steering_angle,
            command: o.command,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Observation>, D::Error> {
        use serde::de::Error;
        let Some(st) = Option::<Stored>::deserialize(d)? else { return Ok(None) };
        let n = st.width * st.height;
        let bytes = STANDARD.decode(&st.photometric).map_err(D::Error::custom)?;
        if bytes.len() != 4 * n || st.semantic.len() != n {
            return Err(D::Error::custom("observation size does not match width x height"));
        }
        let photometric = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        let classes = st
            .semantic
            .bytes()
            .map(|b| b.checked_sub(b'0').and_then(SemClass::from_u8).ok_or_else(|| D::Error::custom("bad semantic class")))
            .collect::<Result<_, _>>()?;
        Ok(Some(Observation {
            width: st.width,
            height: st.height,
            photometric,
            semantic: SemanticGrid { width: st.width, height: st.height, classes },
            speed: st.speed,
            accel: st.accel,
            steering_angle: st.steering_angle,
            command: st.command,
        }))
    }
}

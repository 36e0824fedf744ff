//! Run configuration: TOML or JSON files layered over named presets, with
//! every default resolved in the effective snapshot.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use lanecraft::env::{bundled_track, Env, EnvConfig, Track, EXPERT_LOOKAHEAD};
use lanecraft::evalkit::{EvalSetup, InterventionPolicy};
use lanecraft::learner::{PpoConfig, TrainSetup};
use lanecraft::policy::{ExtractorPreset, PolicyConfig};
use lanecraft::sensor::{CameraConfig, VisualRandomization};
use lanecraft::vehicle::{DynamicsRandomization, VehicleParams};
use lanecraft::world::{curb_bug_fixture, load_scenario, RouteConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

/// File name of the resolved configuration written by every subcommand.
pub const SNAPSHOT_FILE: &str = "effective_config.json";

/// Presets keyed by model id; each file lists only what differs from
/// [`RunConfig::default`].
pub const PRESETS: &[(&str, &str)] = &[
    ("CONTINUOUS-PLAIN", include_str!("../presets/CONTINUOUS-PLAIN.toml")),
    ("CONTINUOUS-LOW-RAND", include_str!("../presets/CONTINUOUS-LOW-RAND.toml")),
    ("CONTINUOUS-REG", include_str!("../presets/CONTINUOUS-REG.toml")),
    ("DISCRETE-PLAIN", include_str!("../presets/DISCRETE-PLAIN.toml")),
    ("DISCRETE-REG", include_str!("../presets/DISCRETE-REG.toml")),
    ("SEMSEG-ONLY", include_str!("../presets/SEMSEG-ONLY.toml")),
    ("AUXILIARY-DEPTH", include_str!("../presets/AUXILIARY-DEPTH.toml")),
    ("WAYPOINTS-DISCRETE", include_str!("../presets/WAYPOINTS-DISCRETE.toml")),
    ("WAYPOINTS-CONTINUOUS", include_str!("../presets/WAYPOINTS-CONTINUOUS.toml")),
    ("DYNAMICS-RAND-FFW", include_str!("../presets/DYNAMICS-RAND-FFW.toml")),
    ("DYNAMICS-RAND-RNN", include_str!("../presets/DYNAMICS-RAND-RNN.toml")),
];

/// Evaluation settings shared by `eval`, `offline` and `saliency`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub scenarios: Vec<String>,
    pub trials: usize,
    pub time_limit_factor: f64,
    pub record_observations: bool,
    /// Resampling step (meters) of the deviation metric.
    pub deviation_step: f64,
    /// Cell size (meters) of the trajectory heat map.
    pub heat_cell: f64,
    pub expert_lookahead: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            scenarios: vec!["val_s_east".into(), "val_s_west".into(), "test_town_east".into(), "test_town_west".into()],
            trials: 3,
            time_limit_factor: 3.0,
            record_observations: false,
            deviation_step: 0.5,
            heat_cell: 5.0,
            expert_lookahead: EXPERT_LOOKAHEAD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Preset the file was layered over, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub model_id: String,
    pub seed: u64,
    pub total_frames: u64,
    /// Checkpoint period in updates.
    pub checkpoint_every: u64,
    /// Weights to fine-tune from, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Training scenarios: bundled names or scenario files.
    pub scenarios: Vec<String>,
    pub env: EnvConfig,
    pub vehicle: VehicleParams,
    pub dynamics: DynamicsRandomization,
    pub visual: VisualRandomization,
    pub camera: CameraConfig,
    pub policy: PolicyConfig,
    pub ppo: PpoConfig,
    pub intervention: InterventionPolicy,
    pub eval: EvalOptions,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: None,
            model_id: "CONTINUOUS-PLAIN".into(),
            seed: 1,
            total_frames: 300_000,
            checkpoint_every: 25,
            init_checkpoint: None,
            out_dir: None,
            scenarios: vec!["train_east".into(), "train_west".into()],
            env: EnvConfig::default(),
            vehicle: VehicleParams::default(),
            dynamics: DynamicsRandomization::default(),
            visual: VisualRandomization::default(),
            camera: CameraConfig::desk(),
            policy: PolicyConfig { extractor: ExtractorPreset::Desk, ..Default::default() },
            ppo: PpoConfig::default(),
            intervention: InterventionPolicy::default(),
            eval: EvalOptions::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

/// Recursively overlays `top` onto `base`; tables merge, everything else
/// replaces.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn parse_text(text: &str, json: bool, origin: &str) -> Result<Value, CliError> {
    if json {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))
    } else {
        let v: toml::Value = toml::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        serde_json::to_value(v).map_err(|e| CliError::Config(format!("{origin}: {e}")))
    }
}

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

fn preset_text(name: &str) -> Result<&'static str, CliError> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| CliError::Config(format!("unknown preset '{name}'; known presets: {}", preset_names().join(", "))))
}

impl RunConfig {
    /// Defaults with the named preset applied.
    pub fn preset(name: &str) -> Result<RunConfig, CliError> {
        Self::from_value(Value::Object(Default::default()), Some(name), Path::new("."))
    }

    /// Reads a `.json` or TOML file. A `preset` key layers the file over
    /// that preset.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let origin = path.display().to_string();
        let user = parse_text(&text, json, &origin)?;
        let preset = user
            .get("preset")
            .map(|p| p.as_str().map(str::to_owned).ok_or_else(|| CliError::Config(format!("{origin}: preset must be a string"))));
        let preset = preset.transpose()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Self::from_value(user, preset.as_deref(), &base).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{origin}: {m}")),
            other => other,
        })
    }

    fn from_value(user: Value, preset: Option<&str>, base_dir: &Path) -> Result<RunConfig, CliError> {
        let mut value = serde_json::to_value(RunConfig::default()).expect("config serializes");
        if let Some(name) = preset {
            merge(&mut value, parse_text(preset_text(name)?, false, &format!("preset {name}"))?);
        }
        merge(&mut value, user);
        let mut cfg: RunConfig = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let c = |r: Result<(), String>| r.map_err(CliError::Config);
        c(self.env.validate())?;
        c(self.camera.validate())?;
        c(self.policy.validate())?;
        c(self.ppo.validate())?;
        c(self.vehicle.validate().map_err(|e| e.to_string()))?;
        c(self.dynamics.validate().map_err(|e| e.to_string()))?;
        c(self.intervention.validate(self.env.divergence_limit))?;
        if self.visual.weather_presets.is_empty() {
            return Err(CliError::Config("visual.weather_presets must not be empty".into()));
        }
        if self.env.fixed_weather >= self.visual.weather_presets.len() {
            return Err(CliError::Config(format!(
                "env.fixed_weather = {} but only {} weather presets exist",
                self.env.fixed_weather,
                self.visual.weather_presets.len()
            )));
        }
        if self.scenarios.is_empty() {
            return Err(CliError::Config("scenarios must name at least one training scenario".into()));
        }
        if self.eval.trials == 0 {
            return Err(CliError::Config("eval.trials must be at least 1".into()));
        }
        if !(self.eval.time_limit_factor >= 1.0) {
            return Err(CliError::Config("eval.time_limit_factor must be at least 1".into()));
        }
        if !(self.eval.deviation_step > 0.0 && self.eval.heat_cell > 0.0) {
            return Err(CliError::Config("eval.deviation_step and eval.heat_cell must be positive".into()));
        }
        for name in self.scenarios.iter().chain(&self.eval.scenarios) {
            if bundled_track(name).is_none() && fixture_track(name).is_none() && !self.resolve_path(Path::new(name)).exists() {
                return Err(CliError::Config(format!("scenario '{name}' is neither bundled nor an existing file")));
            }
        }
        if let Some(p) = &self.init_checkpoint {
            if !self.resolve_path(p).exists() {
                return Err(CliError::Config(format!("init_checkpoint {} does not exist", self.resolve_path(p).display())));
            }
        }
        Ok(())
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Environment for training; observations follow the policy's inputs.
    pub fn env(&self) -> Env {
        Env {
            cfg: self.env.clone(),
            vehicle: self.vehicle.clone(),
            dynamics: self.dynamics.clone(),
            visual: self.visual.clone(),
            camera: self.camera.clone(),
            semseg_only: self.policy.semseg_only,
            training: true,
        }
    }

    pub fn eval_setup(&self) -> EvalSetup {
        let mut setup = EvalSetup::new(self.env());
        setup.intervention = self.intervention;
        setup.time_limit_factor = self.eval.time_limit_factor;
        setup.record_observations = self.eval.record_observations;
        setup
    }

    pub fn train_setup(&self) -> Result<TrainSetup, CliError> {
        let tracks = self.scenarios.iter().map(|s| resolve_track(s, &self.base_dir)).collect::<Result<Vec<_>, _>>()?;
        Ok(TrainSetup {
            model_id: self.model_id.clone(),
            env: self.env(),
            tracks,
            policy: self.policy.clone(),
            ppo: self.ppo.clone(),
            seed: self.seed,
            total_frames: self.total_frames,
            checkpoint_every: self.checkpoint_every,
            init_checkpoint: self.init_checkpoint.as_ref().map(|p| self.resolve_path(p)),
        })
    }

    /// Snapshot with every default filled in; reloadable as a config.
    pub fn snapshot(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// The two bend routes used to demonstrate sparse-checkpoint curb cutting.
pub fn fixture_track(name: &str) -> Option<Arc<Track>> {
    let (map, sparse, dense) = curb_bug_fixture();
    let sc = [sparse, dense].into_iter().find(|s| s.name == name)?;
    Track::new(sc, Arc::new(map), &RouteConfig::default()).ok().map(Arc::new)
}

/// Bundled scenario, curb-bug fixture, or scenario file (relative to
/// `base_dir`).
pub fn resolve_track(name: &str, base_dir: &Path) -> Result<Arc<Track>, CliError> {
    if let Some(t) = bundled_track(name).or_else(|| fixture_track(name)) {
        return Ok(t);
    }
    let path = if Path::new(name).is_absolute() { PathBuf::from(name) } else { base_dir.join(name) };
    if !path.exists() {
        return Err(CliError::Usage(format!("unknown scenario '{name}' (not bundled, no such file)")));
    }
    let (sc, map) = load_scenario(&path).map_err(|e| CliError::Input(e.to_string()))?;
    Track::new(sc, Arc::new(map), &RouteConfig::default()).map(Arc::new).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Writes `value` as pretty JSON to `<dir>/effective_config.json`.
pub fn write_snapshot(dir: &Path, value: &Value) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| crate::error::io_error(dir, e))?;
    let path = dir.join(SNAPSHOT_FILE);
    let text = serde_json::to_string_pretty(value).expect("snapshot serializes");
    std::fs::write(&path, text + "\n").map_err(|e| crate::error::io_error(&path, e))?;
    Ok(path)
}

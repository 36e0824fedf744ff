//! Subcommand implementations. Each returns a human-readable summary or a
//! [`CliError`] carrying the exit code.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lanecraft::env::Track;
use lanecraft::evalkit::{
    autonomy_percent, average_f1, correlation_report, drive, evaluate_with_safety_driver, heat_csv, leaderboard, leaderboard_csv,
    mean_abs_lateral, mean_deviation, oscillation, replay_reference, steering_mae, trajectory_heat, verify_replay, DriveLog, DriverSpec,
    EvalError, ExpertDriver, ModelMetrics, TrialResult, BUCKET_THRESHOLD,
};
use lanecraft::learner::{train, LearnError, MetricsRow, TrainOptions, TrainOutcome};
use lanecraft::par::{effective_threads, Workers};
use lanecraft::policy::{Policy, PolicyError};
use lanecraft::saliency::{saliency_batch, PatchReduce, SaliencyConfig, SaliencyError, SaliencyTarget};
use lanecraft::world::{bundled_scenarios, validate_reference};
use serde_json::{json, Value};

use crate::args::{Cli, Command, ConfigSource, EvalArgs, OfflineArgs, ReplayArgs, SaliencyArgs, TargetArg, TrainArgs, ValidateArgs};
use crate::config::{preset_names, resolve_track, write_snapshot, RunConfig};
use crate::error::{io_error, CliError};

pub const LEADERBOARD_FILE: &str = "leaderboard.csv";
pub const DEVIATION_FILE: &str = "deviation.csv";
pub const HEAT_FILE: &str = "heat.csv";
pub const OFFLINE_FILE: &str = "offline.csv";
pub const CORRELATION_FILE: &str = "correlation.csv";

/// Shared process-level options.
#[derive(Debug, Clone, Copy, Default)]
pub struct Globals {
    pub threads: Option<usize>,
    pub quiet: bool,
}

impl Globals {
    fn threads(&self) -> usize {
        let hw = std::thread::available_parallelism().map_or(1, |n| n.get());
        effective_threads(self.threads.unwrap_or(hw))
    }

    fn pool(&self) -> Workers {
        Workers::new(self.threads())
    }

    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

pub fn run(cli: Cli) -> Result<String, CliError> {
    let g = Globals { threads: cli.threads, quiet: cli.quiet };
    match cli.command {
        Command::Train(a) => cmd_train(&a, g)
            .map(|o| format!("trained {} updates, {} frames; final checkpoint {}", o.updates, o.frames, o.final_checkpoint.display())),
        Command::Eval(a) => cmd_eval(&a, g).map(|r| r.summary()),
        Command::Offline(a) => cmd_offline(&a, g).map(|r| r.summary()),
        Command::Validate(a) => cmd_validate(&a).map(|n| format!("{}: reference path stays on drivable ground ({n} samples)", a.scenario)),
        Command::Saliency(a) => cmd_saliency(&a, g).map(|paths| format!("wrote {} overlays to {}", paths.len(), a.out.display())),
        Command::Replay(a) => cmd_replay(&a).map(|n| format!("{}: {n} frames re-simulated bit for bit", a.log.display())),
        Command::List => Ok(list()),
    }
}

fn list() -> String {
    let mut s = String::from("presets:\n");
    for p in preset_names() {
        let _ = writeln!(s, "  {p}");
    }
    s.push_str("scenarios:\n");
    for sc in bundled_scenarios() {
        let _ = writeln!(s, "  {} ({:?}, map {})", sc.name, sc.split, sc.map_id);
    }
    s.push_str("  curb_bug_sparse, curb_bug_dense (validator fixtures)");
    s
}

fn load_config(source: &ConfigSource) -> Result<Option<RunConfig>, CliError> {
    match (&source.config, &source.preset) {
        (Some(path), _) => RunConfig::load(path).map(Some),
        (None, Some(name)) => RunConfig::preset(name).map(Some),
        (None, None) => Ok(None),
    }
}

fn learn_error(e: LearnError) -> CliError {
    match e {
        LearnError::Config(m) => CliError::Config(m),
        LearnError::Policy(PolicyError::Arch { expected, found }) => {
            CliError::Config(format!("checkpoint architecture '{found}' does not match the configured '{expected}'"))
        }
        LearnError::Policy(e) => CliError::Input(e.to_string()),
        LearnError::Io { .. } => CliError::Input(e.to_string()),
        other => CliError::Run(other.to_string()),
    }
}

fn eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::UnknownScenario(_) => CliError::Usage(e.to_string()),
        EvalError::Checkpoint(_) | EvalError::Io { .. } | EvalError::Log(_) | EvalError::MissingObservations => {
            CliError::Input(e.to_string())
        }
        EvalError::Config(m) => CliError::Config(m),
        other => CliError::Run(other.to_string()),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn cmd_train(a: &TrainArgs, g: Globals) -> Result<TrainOutcome, CliError> {
    let mut cfg = load_config(&a.source)?.ok_or_else(|| CliError::Usage("train needs --config <file> or --preset <model id>".into()))?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(frames) = a.frames {
        cfg.total_frames = frames;
    }
    cfg.out_dir = Some(a.out.clone());
    if let Some(r) = &a.resume {
        if !r.exists() {
            return Err(CliError::Input(format!("resume checkpoint {} does not exist", r.display())));
        }
    }
    let setup = cfg.train_setup()?;
    write_snapshot(&a.out, &cfg.snapshot())?;
    let mut opts = TrainOptions::new(&a.out);
    opts.resume = a.resume.clone();
    opts.threads = g.threads();
    let mut progress = |row: &MetricsRow, _: &[lanecraft::learner::EpisodeSummary]| {
        g.note(format!(
            "update {} frames {} return {:.1} completion {:.2} entropy {:.3}",
            row.update, row.frames, row.mean_return, row.completion_rate, row.entropy
        ));
        true
    };
    opts.on_update = Some(&mut progress);
    train(&setup, opts).map_err(learn_error)
}

/// Parses the driver argument of `eval`.
pub fn parse_driver(arg: &str, lookahead: f64) -> Result<DriverSpec, CliError> {
    let bad = |m: &str| CliError::Usage(format!("bad --checkpoint '{arg}': {m}"));
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad("expected a number"));
    if arg == "expert" {
        return Ok(DriverSpec::Expert { lookahead });
    }
    if let Some(rest) = arg.strip_prefix("expert-noise:") {
        let mut parts = rest.split(':');
        let noise_std = num(parts.next().unwrap_or(""))?;
        let seed = match parts.next() {
            Some(s) => s.parse().map_err(|_| bad("seed must be an integer"))?,
            None => 0,
        };
        if !(noise_std >= 0.0) {
            return Err(bad("noise must be non-negative"));
        }
        return Ok(DriverSpec::NoisyExpert { lookahead, noise_std, seed });
    }
    if let Some(rest) = arg.strip_prefix("constant:") {
        return Ok(DriverSpec::Constant { steering: num(rest)? });
    }
    let path = Path::new(arg);
    if !path.is_file() {
        return Err(CliError::Input(format!("checkpoint {arg} does not exist")));
    }
    let path = path.canonicalize().map_err(|e| io_error(path, e))?;
    Ok(DriverSpec::Checkpoint { path })
}

/// `<model_id>@<update>` from the checkpoint header, else the file stem.
pub fn checkpoint_model_id(path: &Path, meta: &Value) -> String {
    match (meta["model_id"].as_str(), meta["update"].as_u64()) {
        (Some(id), Some(update)) => format!("{id}@{update}"),
        _ => path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into()),
    }
}

fn load_policy(path: &Path) -> Result<(Policy<f32>, Value), CliError> {
    Policy::<f32>::load(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub model: String,
    pub results: Vec<TrialResult>,
    pub logs: Vec<PathBuf>,
    pub out: PathBuf,
}

impl EvalReport {
    fn summary(&self) -> String {
        let rows = leaderboard(&self.results);
        let mean = rows.first().map_or(0.0, |r| r.mean);
        format!("{}: mean autonomy {mean:.2}% over {} drives; reports in {}", self.model, self.results.len(), self.out.display())
    }
}

pub fn cmd_eval(a: &EvalArgs, g: Globals) -> Result<EvalReport, CliError> {
    let explicit = load_config(&a.source)?;
    let lookahead = explicit.as_ref().map_or(lanecraft::env::EXPERT_LOOKAHEAD, |c| c.eval.expert_lookahead);
    let spec = parse_driver(&a.checkpoint, lookahead)?;
    let mut model = spec.model_id();
    let mut cfg = explicit.clone().unwrap_or_default();
    if let DriverSpec::Checkpoint { path } = &spec {
        let (policy, meta) = load_policy(path)?;
        model = checkpoint_model_id(path, &meta);
        match &explicit {
            Some(c) => {
                if Policy::<f32>::arch_json_for(&c.policy, c.camera.width, c.camera.height) != policy.arch_json() {
                    return Err(CliError::Config(format!(
                        "checkpoint architecture '{}' does not match the configured '{}'",
                        policy.arch_string(),
                        Policy::<f32>::arch_string_for(&c.policy, c.camera.width, c.camera.height)
                    )));
                }
            }
            None => {
                if let Some(name) = meta["model_id"].as_str().filter(|n| preset_names().contains(n)) {
                    cfg = RunConfig::preset(name)?;
                }
                cfg.policy = policy.cfg.clone();
                cfg.camera.width = policy.width;
                cfg.camera.height = policy.height;
            }
        }
    }
    if let Some(m) = &a.model {
        model = m.clone();
    }
    let names = if a.scenarios.is_empty() { cfg.eval.scenarios.clone() } else { a.scenarios.clone() };
    let tracks: Vec<Arc<Track>> = names.iter().map(|n| resolve_track(n, &cfg.base_dir)).collect::<Result<_, _>>()?;
    let trials = a.trials.unwrap_or(cfg.eval.trials);
    if trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let mut setup = cfg.eval_setup();
    setup.record_observations |= a.record_observations;
    setup.validate().map_err(CliError::Config)?;
    write_snapshot(
        &a.out,
        &json!({
            "command": "eval",
            "driver": spec,
            "model": model,
            "scenarios": names,
            "trials": trials,
            "seed": a.seed,
            "setup": setup,
            "config": cfg.snapshot(),
        }),
    )?;

    let pool = g.pool();
    let make = || spec.build();
    let mut results = Vec::new();
    let mut all_logs = Vec::new();
    let mut log_paths = Vec::new();
    let mut deviation = String::from("model,scenario,trial,autonomy,mean_deviation,oscillation,mean_abs_lateral\n");
    let opt = |v: Option<f64>| v.map_or("".to_string(), |x| x.to_string());
    for track in &tracks {
        let name = track.scenario.name.clone();
        g.note(format!("evaluating {model} on {name} ({trials} trials)"));
        let logs = evaluate_with_safety_driver(&setup, track, &make, Some(&spec), &model, trials, a.seed, &pool).map_err(eval_error)?;
        let experts =
            pool.map(logs.len(), |k| drive(&setup, track.clone(), &mut ExpertDriver { lookahead }, "EXPERT", logs[k].header.seed));
        for (k, (log, expert)) in logs.iter().zip(experts).enumerate() {
            let expert = expert.map_err(eval_error)?;
            let autonomy = autonomy_percent(log).map_err(eval_error)?;
            let dev = mean_deviation(log, &expert, cfg.eval.deviation_step).ok();
            let _ =
                writeln!(deviation, "{model},{name},{k},{autonomy},{},{},{}", opt(dev), opt(oscillation(log)), opt(mean_abs_lateral(log)));
            results.push(TrialResult { model: model.clone(), scenario: name.clone(), trial: k, autonomy });
            let path = a.out.join("logs").join(format!("{}_{name}_trial{k}.jsonl", file_safe(&model)));
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
            }
            log.write(&path).map_err(eval_error)?;
            log_paths.push(path);
        }
        all_logs.extend(logs);
    }
    write_file(&a.out.join(LEADERBOARD_FILE), &leaderboard_csv(&leaderboard(&results)))?;
    write_file(&a.out.join(DEVIATION_FILE), &deviation)?;
    write_file(&a.out.join(HEAT_FILE), &heat_csv(&trajectory_heat(&all_logs, cfg.eval.heat_cell)))?;
    Ok(EvalReport { model, results, logs: log_paths, out: a.out.clone() })
}

fn file_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

/// Mean autonomy per model from leaderboard CSVs (`model,...,mean,max`).
pub fn read_leaderboards(paths: &[PathBuf]) -> Result<BTreeMap<String, f64>, CliError> {
    let mut out = BTreeMap::new();
    for path in paths {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
        let mean_col = header.iter().position(|h| *h == "mean").filter(|_| header.first() == Some(&"model"));
        let mean_col = mean_col.ok_or_else(|| CliError::Input(format!("{}: not a leaderboard CSV", path.display())))?;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let mean = f.get(mean_col).and_then(|v| v.parse::<f64>().ok());
            let mean = mean.ok_or_else(|| CliError::Input(format!("{}: bad row '{line}'", path.display())))?;
            out.insert(f[0].to_string(), mean);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct OfflineReport {
    pub rows: Vec<ModelMetrics>,
    pub skipped: Vec<String>,
    pub correlation: Option<lanecraft::evalkit::CorrelationReport>,
    pub out: PathBuf,
}

impl OfflineReport {
    fn summary(&self) -> String {
        let mut s = format!("scored {} models", self.rows.len());
        if !self.skipped.is_empty() {
            let _ = write!(s, ", skipped {}", self.skipped.len());
        }
        if let Some(c) = &self.correlation {
            let f = |v: Option<f64>| v.map_or("undefined".into(), |x| format!("{x:.3}"));
            let _ = write!(s, "; spearman MAE/autonomy {}, F1/autonomy {}", f(c.mae_vs_autonomy), f(c.f1_vs_autonomy));
        }
        let _ = write!(s, "; reports in {}", self.out.display());
        s
    }
}

pub fn cmd_offline(a: &OfflineArgs, g: Globals) -> Result<OfflineReport, CliError> {
    let reference = DriveLog::read(&a.reference).map_err(eval_error)?;
    if !reference.has_observations() {
        return Err(CliError::Input(format!(
            "reference {} has no stored observations (record it with --record-observations)",
            a.reference.display()
        )));
    }
    let autonomy = read_leaderboards(&a.autonomy)?;
    write_snapshot(
        &a.out,
        &json!({ "command": "offline", "checkpoints": a.checkpoints, "reference": a.reference, "autonomy": a.autonomy, "bucket_threshold": BUCKET_THRESHOLD }),
    )?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for c in &a.checkpoints {
        let (model, log) = if c == "reference" {
            ("REFERENCE".to_string(), reference.clone())
        } else {
            let path = Path::new(c);
            let (policy, meta) = load_policy(path)?;
            let model = checkpoint_model_id(path, &meta);
            if policy.cfg.action_space.is_waypoint() {
                g.note(format!("skipping {model}: waypoint policies have no direct steering to compare"));
                skipped.push(model);
                continue;
            }
            if (policy.width, policy.height) != (reference.frames[0].observation.as_ref().map_or((0, 0), |o| (o.width, o.height))) {
                return Err(CliError::Input(format!(
                    "{c}: policy input {}x{} does not match the reference observations",
                    policy.width, policy.height
                )));
            }
            let log = replay_reference(&Arc::new(policy), &reference, &model).map_err(eval_error)?;
            (model, log)
        };
        rows.push(ModelMetrics {
            autonomy: autonomy.get(&model).copied().unwrap_or(f64::NAN),
            steering_mae: steering_mae(&log, &reference).map_err(eval_error)?,
            average_f1: average_f1(&log, &reference, BUCKET_THRESHOLD).map_err(eval_error)?,
            model,
        });
    }
    let mut csv = String::from("model,steering_mae,average_f1,autonomy\n");
    for r in &rows {
        let auto = if r.autonomy.is_nan() { String::new() } else { r.autonomy.to_string() };
        let _ = writeln!(csv, "{},{},{},{auto}", r.model, r.steering_mae, r.average_f1);
    }
    write_file(&a.out.join(OFFLINE_FILE), &csv)?;
    let with_autonomy: Vec<ModelMetrics> = rows.iter().filter(|r| !r.autonomy.is_nan()).cloned().collect();
    let mut correlation = None;
    if !a.autonomy.is_empty() {
        match correlation_report(&with_autonomy) {
            Ok(rep) => {
                write_file(&a.out.join(CORRELATION_FILE), &rep.to_csv())?;
                correlation = Some(rep);
            }
            Err(e) => g.note(format!("no correlation report: {e}")),
        }
    }
    Ok(OfflineReport { rows, skipped, correlation, out: a.out.clone() })
}

/// Number of samples checked; violations are a check failure.
pub fn cmd_validate(a: &ValidateArgs) -> Result<usize, CliError> {
    if !(a.step > 0.0) {
        return Err(CliError::Usage("--step must be positive".into()));
    }
    let track = resolve_track(&a.scenario, Path::new("."))?;
    if let Some(out) = &a.out {
        write_snapshot(out, &json!({ "command": "validate", "scenario": a.scenario, "step": a.step }))?;
    }
    let path = &track.route.path;
    let violations = validate_reference(path, &track.map, a.step);
    if violations.is_empty() {
        return Ok((path.total_length / a.step).floor() as usize + 1);
    }
    let list: Vec<String> = violations.iter().map(|v| format!("{:.2}", v.arclength)).collect();
    Err(CliError::Check(format!(
        "{}: {} path samples leave drivable ground at arclengths [{}] m",
        a.scenario,
        violations.len(),
        list.join(", ")
    )))
}

pub fn cmd_saliency(a: &SaliencyArgs, g: Globals) -> Result<Vec<PathBuf>, CliError> {
    let cfg = SaliencyConfig {
        patch_size: a.patch,
        target: match a.target {
            TargetArg::Action => SaliencyTarget::ActionMean,
            TargetArg::Value => SaliencyTarget::Value,
        },
        reduce: if a.average { PatchReduce::Average } else { PatchReduce::Sum },
        include_semantic: a.include_semantic,
        photo_weight: a.photo_weight,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let (policy, _) = load_policy(&a.checkpoint)?;
    let log = DriveLog::read(&a.log).map_err(eval_error)?;
    write_snapshot(&a.out, &json!({ "command": "saliency", "checkpoint": a.checkpoint, "log": a.log, "saliency": cfg }))?;
    saliency_batch(&Arc::new(policy), &log, &cfg, &a.out, &g.pool()).map_err(|e| match e {
        SaliencyError::Config(m) => CliError::Usage(m),
        SaliencyError::Shape { .. } | SaliencyError::MissingObservations | SaliencyError::Io { .. } => CliError::Input(e.to_string()),
        SaliencyError::Policy(p) => CliError::Run(p.to_string()),
    })
}

/// Frames re-simulated; any bit difference is a check failure.
pub fn cmd_replay(a: &ReplayArgs) -> Result<usize, CliError> {
    let log = DriveLog::read(&a.log).map_err(eval_error)?;
    if let Some(out) = &a.out {
        write_snapshot(out, &json!({ "command": "replay", "log": a.log, "scenario_dir": a.scenario_dir, "header": log.header }))?;
    }
    let dir = a.scenario_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let resolve =
        |name: &str| -> Option<Arc<Track>> { resolve_track(name, &dir).ok().or_else(|| resolve_track(&format!("{name}.json"), &dir).ok()) };
    let check = verify_replay(&log, &resolve).map_err(eval_error)?;
    match check.first_mismatch {
        None => Ok(check.frames),
        Some(k) => Err(CliError::Check(format!(
            "{}: re-simulation diverges at frame {k} ({} recorded, {} re-simulated)",
            a.log.display(),
            check.frames,
            check.resimulated
        ))),
    }
}

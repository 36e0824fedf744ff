use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{spearman, EvalError};

/// Offline metrics and closed-loop autonomy of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMetrics {
    pub model: String,
    /// Mean autonomy over scenarios (percent).
    pub autonomy: f64,
    pub steering_mae: f64,
    pub average_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub rows: Vec<ModelMetrics>,
    /// Spearman(steering_mae, autonomy); `None` when undefined.
    pub mae_vs_autonomy: Option<f64>,
    /// Spearman(average_f1, autonomy); `None` when undefined.
    pub f1_vs_autonomy: Option<f64>,
}

pub fn correlation_report(rows: &[ModelMetrics]) -> Result<CorrelationReport, EvalError> {
    if rows.len() < 3 {
        return Err(EvalError::TooFewModels(rows.len()));
    }
    let autonomy: Vec<f64> = rows.iter().map(|r| r.autonomy).collect();
    let mae: Vec<f64> = rows.iter().map(|r| r.steering_mae).collect();
    let f1: Vec<f64> = rows.iter().map(|r| r.average_f1).collect();
    Ok(CorrelationReport { rows: rows.to_vec(), mae_vs_autonomy: spearman(&mae, &autonomy)?, f1_vs_autonomy: spearman(&f1, &autonomy)? })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "undefined".into())
}

impl CorrelationReport {
    /// Per-model rows (the scatter data) followed by the two rank
    /// correlations as comment lines.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,autonomy,steering_mae,average_f1\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.model, r.autonomy, r.steering_mae, r.average_f1);
        }
        let _ = writeln!(s, "# spearman_mae_vs_autonomy,{}", fmt_opt(self.mae_vs_autonomy));
        let _ = writeln!(s, "# spearman_f1_vs_autonomy,{}", fmt_opt(self.f1_vs_autonomy));
        s
    }
}

/// Autonomy of one drive.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub model: String,
    pub scenario: String,
    pub trial: usize,
    pub autonomy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderboardRow {
    pub model: String,
    /// Trial-averaged autonomy per scenario, in scenario order.
    pub per_scenario: Vec<(String, f64)>,
    pub mean: f64,
    pub max: f64,
}

/// One row per model, sorted by mean autonomy (descending), ties by model
/// id. Scenario columns appear in first-seen order.
pub fn leaderboard(results: &[TrialResult]) -> Vec<LeaderboardRow> {
    let mut scenarios: Vec<String> = Vec::new();
    for r in results {
        if !scenarios.contains(&r.scenario) {
            scenarios.push(r.scenario.clone());
        }
    }
    let mut cells: BTreeMap<&str, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for r in results {
        cells.entry(&r.model).or_default().entry(&r.scenario).or_default().push(r.autonomy);
    }
    let mut rows: Vec<LeaderboardRow> = cells
        .into_iter()
        .map(|(model, per)| {
            let per_scenario: Vec<(String, f64)> =
                scenarios.iter().filter_map(|s| per.get(s.as_str()).map(|v| (s.clone(), v.iter().sum::<f64>() / v.len() as f64))).collect();
            let vals: Vec<f64> = per_scenario.iter().map(|(_, v)| *v).collect();
            LeaderboardRow {
                model: model.to_string(),
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                max: vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                per_scenario,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.mean.total_cmp(&a.mean).then_with(|| a.model.cmp(&b.model)));
    rows
}

pub fn leaderboard_csv(rows: &[LeaderboardRow]) -> String {
    let mut scenarios: Vec<&str> = Vec::new();
    for r in rows {
        for (s, _) in &r.per_scenario {
            if !scenarios.contains(&s.as_str()) {
                scenarios.push(s);
            }
        }
    }
    let mut out = String::from("model");
    for s in &scenarios {
        let _ = write!(out, ",{s}");
    }
    out.push_str(",mean,max\n");
    for r in rows {
        out.push_str(&r.model);
        for s in &scenarios {
            match r.per_scenario.iter().find(|(n, _)| n == s) {
                Some((_, v)) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        let _ = writeln!(out, ",{},{}", r.mean, r.max);
    }
    out
}

/// Positions binned on a `cell`-meter grid with the fraction of frames in
/// each bin the policy drove: rows of (x, y, autonomy_fraction) at bin
/// centers.
pub fn trajectory_heat(logs: &[super::DriveLog], cell: f64) -> Vec<(f64, f64, f64)> {
    let mut bins: BTreeMap<(i64, i64), (usize, usize)> = BTreeMap::new();
    for log in logs {
        for f in &log.frames {
            let key = ((f.position.x / cell).floor() as i64, (f.position.y / cell).floor() as i64);
            let e = bins.entry(key).or_default();
            e.0 += usize::from(!f.intervention);
            e.1 += 1;
        }
    }
    bins.into_iter().map(|((i, j), (own, all))| ((i as f64 + 0.5) * cell, (j as f64 + 0.5) * cell, own as f64 / all as f64)).collect()
}

pub fn heat_csv(rows: &[(f64, f64, f64)]) -> String {
    let mut s = String::from("x,y,autonomy_fraction\n");
    for (x, y, a) in rows {
        let _ = writeln!(s, "{x},{y},{a}");
    }
    s
}

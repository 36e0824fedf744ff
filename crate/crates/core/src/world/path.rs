use serde::{Deserialize, Serialize};

use super::{WorldError, WorldMap};
use crate::geometry::{segment_param, Vec2};

/// Polyline through the route checkpoints with its cumulative arclength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePath {
    pub polyline: Vec<Vec2>,
    pub cumulative_arclength: Vec<f64>,
    pub total_length: f64,
}

/// Closest-point projection of a world point onto a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub arclength: f64,
    /// Signed perpendicular offset, positive to the left of travel.
    pub lateral: f64,
    pub segment_index: usize,
}

/// A sampled path point that falls outside drivable space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub arclength: f64,
    pub point: Vec2,
}

/// Connects checkpoints with straight segments.
pub fn build_reference_path(checkpoints: &[Vec2]) -> Result<ReferencePath, WorldError> {
    if checkpoints.len() < 2 {
        return Err(WorldError::validation("checkpoints", "at least two checkpoints are required"));
    }
    let mut cumulative = Vec::with_capacity(checkpoints.len());
    cumulative.push(0.0);
    for (i, w) in checkpoints.windows(2).enumerate() {
        if !w[0].is_finite() || !w[1].is_finite() {
            return Err(WorldError::validation("checkpoints", format!("checkpoint {} is not finite", i + 1)));
        }
        let d = w[0].dist(w[1]);
        if d == 0.0 {
            return Err(WorldError::Degenerate { index: i + 1 });
        }
        cumulative.push(cumulative[i] + d);
    }
    let total_length = *cumulative.last().unwrap();
    Ok(ReferencePath { polyline: checkpoints.to_vec(), cumulative_arclength: cumulative, total_length })
}

impl ReferencePath {
    pub fn segment_count(&self) -> usize {
        self.polyline.len() - 1
    }

    fn segment_of(&self, s: f64) -> usize {
        let s = s.clamp(0.0, self.total_length);
        match self.cumulative_arclength.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(self.segment_count() - 1),
            Err(i) => (i - 1).min(self.segment_count() - 1),
        }
    }

    /// Position at arclength `s` (clamped to the path).
    pub fn point_at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.total_length);
        let i = self.segment_of(s);
        let a = self.polyline[i];
        let b = self.polyline[i + 1];
        let len = self.cumulative_arclength[i + 1] - self.cumulative_arclength[i];
        a.lerp(b, (s - self.cumulative_arclength[i]) / len)
    }

    /// Direction of travel (radians) of the segment containing `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        let i = self.segment_of(s);
        (self.polyline[i + 1] - self.polyline[i]).angle()
    }

    /// Global closest-point projection; ties go to the lower segment.
    pub fn project(&self, p: Vec2) -> Projection {
        self.project_range(p, 0, self.segment_count())
    }

    /// Projection restricted to segments overlapping `[s_lo, s_hi]`. Keeps
    /// progress tracking from jumping across nearby parts of the same route.
    pub fn project_window(&self, p: Vec2, s_lo: f64, s_hi: f64) -> Projection {
        let lo = self.segment_of(s_lo);
        let hi = self.segment_of(s_hi) + 1;
        self.project_range(p, lo, hi)
    }

    fn project_range(&self, p: Vec2, lo: usize, hi: usize) -> Projection {
        let mut best_d2 = f64::INFINITY;
        let mut best = Projection { arclength: 0.0, lateral: 0.0, segment_index: lo };
        for i in lo..hi {
            let a = self.polyline[i];
            let b = self.polyline[i + 1];
            let t = segment_param(p, a, b);
            let q = a.lerp(b, t);
            let d = p - q;
            let d2 = d.dot(d);
            if d2 < best_d2 {
                best_d2 = d2;
                let dir = (b - a).normalized();
                let lateral_sign = if dir.cross(p - a) >= 0.0 { 1.0 } else { -1.0 };
                let seg_len = self.cumulative_arclength[i + 1] - self.cumulative_arclength[i];
                best = Projection {
                    arclength: self.cumulative_arclength[i] + t * seg_len,
                    lateral: lateral_sign * d2.sqrt(),
                    segment_index: i,
                };
            }
        }
        best
    }
}

/// Samples the path every `step` meters (plus the end point) and reports each
/// sample outside drivable space.
pub fn validate_reference(path: &ReferencePath, map: &WorldMap, step: f64) -> Vec<Violation> {
    assert!(step > 0.0, "validate_reference step must be positive");
    let n = (path.total_length / step).floor() as usize;
    let mut samples: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
    if samples.last().copied() != Some(path.total_length) {
        samples.push(path.total_length);
    }
    samples
        .into_iter()
        .filter_map(|s| {
            let p = path.point_at(s);
            (!map.is_drivable(p)).then_some(Violation { arclength: s, point: p })
        })
        .collect()
}

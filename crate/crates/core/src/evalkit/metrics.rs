use super::{DriveLog, EvalError, Frame};
use crate::geometry::Vec2;

/// Steering buckets split at `±threshold`; the boundary itself is straight.
pub const BUCKET_THRESHOLD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bucket {
    Left,
    Straight,
    Right,
}

pub fn bucket(steering: f64, threshold: f64) -> Bucket {
    if steering < -threshold {
        Bucket::Left
    } else if steering > threshold {
        Bucket::Right
    } else {
        Bucket::Straight
    }
}

/// Arc distance covered from each frame to the next; the last frame covers
/// nothing.
pub fn frame_distances(frames: &[Frame]) -> Vec<f64> {
    let mut d: Vec<f64> = frames.windows(2).map(|w| (w[1].arclength - w[0].arclength).abs()).collect();
    if !frames.is_empty() {
        d.push(0.0);
    }
    d
}

/// Percentage of arc distance covered while the policy was in control.
pub fn autonomy_percent(log: &DriveLog) -> Result<f64, EvalError> {
    if log.frames.is_empty() {
        return Err(EvalError::EmptyLog);
    }
    let d = frame_distances(&log.frames);
    let (mut own, mut handed) = (0.0, 0.0);
    for (d, f) in d.iter().zip(&log.frames) {
        if f.intervention {
            handed += d;
        } else {
            own += d;
        }
    }
    // own / (own + handed) stays within [0, 1] under rounding.
    let total = own + handed;
    if !(total > 0.0) {
        return Err(EvalError::ZeroDistance);
    }
    Ok(100.0 * (own / total))
}

/// Positions at strictly increasing arclength, for interpolation.
fn monotone_track(frames: &[Frame]) -> Vec<(f64, Vec2)> {
    let mut out: Vec<(f64, Vec2)> = Vec::with_capacity(frames.len());
    for f in frames {
        if out.last().is_none_or(|&(s, _)| f.arclength > s) {
            out.push((f.arclength, f.position));
        }
    }
    out
}

fn position_at(track: &[(f64, Vec2)], s: f64) -> Vec2 {
    let k = track.partition_point(|&(a, _)| a <= s);
    if k == 0 {
        return track[0].1;
    }
    if k == track.len() {
        return track[k - 1].1;
    }
    let ((s0, p0), (s1, p1)) = (track[k - 1], track[k]);
    p0.lerp(p1, (s - s0) / (s1 - s0))
}

/// Mean distance between the two trajectories sampled every `sample_step`
/// meters of arclength over their common range.
pub fn mean_deviation(log: &DriveLog, expert: &DriveLog, sample_step: f64) -> Result<f64, EvalError> {
    if !(sample_step > 0.0) {
        return Err(EvalError::Config("sample_step must be positive".into()));
    }
    let (a, b) = (monotone_track(&log.frames), monotone_track(&expert.frames));
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::EmptyLog);
    }
    let lo = a[0].0.max(b[0].0);
    let hi = a[a.len() - 1].0.min(b[b.len() - 1].0);
    if lo > hi {
        return Err(EvalError::Disjoint);
    }
    let n = ((hi - lo) / sample_step).floor() as usize + 1;
    let sum: f64 = (0..n)
        .map(|i| {
            let s = lo + i as f64 * sample_step;
            position_at(&a, s).dist(position_at(&b, s))
        })
        .sum();
    Ok(sum / n as f64)
}

fn same_length(a: &DriveLog, b: &DriveLog) -> Result<usize, EvalError> {
    if a.frames.len() != b.frames.len() {
        return Err(EvalError::LengthMismatch(a.frames.len(), b.frames.len()));
    }
    if a.frames.is_empty() {
        return Err(EvalError::EmptyLog);
    }
    Ok(a.frames.len())
}

/// Frame-wise mean absolute difference of commanded steering.
pub fn steering_mae(model: &DriveLog, reference: &DriveLog) -> Result<f64, EvalError> {
    let n = same_length(model, reference)?;
    let sum: f64 = model.frames.iter().zip(&reference.frames).map(|(m, r)| (m.commanded_steering - r.commanded_steering).abs()).sum();
    Ok(sum / n as f64)
}

/// Mean over the three steering buckets of the model-vs-reference F1. A
/// bucket absent from both sequences scores 1, absent from one scores 0.
pub fn average_f1(model: &DriveLog, reference: &DriveLog, threshold: f64) -> Result<f64, EvalError> {
    same_length(model, reference)?;
    if !(threshold > 0.0) {
        return Err(EvalError::Config("bucket threshold must be positive".into()));
    }
    let pairs: Vec<(Bucket, Bucket)> = model
        .frames
        .iter()
        .zip(&reference.frames)
        .map(|(m, r)| (bucket(m.commanded_steering, threshold), bucket(r.commanded_steering, threshold)))
        .collect();
    let f1 = |b: Bucket| {
        let tp = pairs.iter().filter(|&&(m, r)| m == b && r == b).count() as f64;
        let fp = pairs.iter().filter(|&&(m, r)| m == b && r != b).count() as f64;
        let fn_ = pairs.iter().filter(|&&(m, r)| m != b && r == b).count() as f64;
        if tp + fp + fn_ == 0.0 {
            1.0
        } else {
            2.0 * tp / (2.0 * tp + fp + fn_)
        }
    };
    Ok((f1(Bucket::Left) + f1(Bucket::Straight) + f1(Bucket::Right)) / 3.0)
}

/// Mean |change of commanded steering| between consecutive frames that the
/// policy drove.
pub fn oscillation(log: &DriveLog) -> Option<f64> {
    let d: Vec<f64> = log
        .frames
        .windows(2)
        .filter(|w| !w[0].intervention && !w[1].intervention)
        .map(|w| (w[1].commanded_steering - w[0].commanded_steering).abs())
        .collect();
    (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
}

/// Mean |lateral| over policy-driven frames.
pub fn mean_abs_lateral(log: &DriveLog) -> Option<f64> {
    let v: Vec<f64> = log.frames.iter().filter(|f| !f.intervention).map(|f| f.lateral.abs()).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Ranks starting at 1; tied values share their mean rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = mean;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson on tie-averaged ranks). `None` when
/// either side is constant, since the correlation is then undefined.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(EvalError::TooFewModels(x.len()));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some(sxy / (sxx * syy).sqrt()))
}

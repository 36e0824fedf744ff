//! Input attribution for policies: exact per-pixel gradients of a scalar
//! output, patch aggregation of those gradients, and grayscale overlays.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{relative_error, Real, Tensor};
use crate::evalkit::DriveLog;
use crate::par::Workers;
use crate::policy::{OutputGrad, Policy, PolicyError, PolicyInput};
use crate::sensor::{pgm, Observation};

#[derive(Debug, Error)]
pub enum SaliencyError {
    #[error("invalid saliency config: {0}")]
    Config(String),
    #[error("observation is {found}, policy expects {expected}")]
    Shape { expected: String, found: String },
    #[error("log has no stored observations")]
    MissingObservations,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Scalar whose gradient is attributed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaliencyTarget {
    /// Deterministic action: Gaussian mean or expected categorical value.
    #[default]
    ActionMean,
    Value,
}

/// How pixel gradients combine inside a patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchReduce {
    #[default]
    Sum,
    Average,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaliencyConfig {
    pub patch_size: usize,
    pub target: SaliencyTarget,
    pub reduce: PatchReduce,
    /// Also attribute through the semantic one-hot planes, summed per cell.
    pub include_semantic: bool,
    /// Share of the overlay contrast modulated by the photometric image.
    pub photo_weight: f64,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        SaliencyConfig {
            patch_size: 5,
            target: SaliencyTarget::ActionMean,
            reduce: PatchReduce::Sum,
            include_semantic: false,
            photo_weight: 0.3,
        }
    }
}

impl SaliencyConfig {
    pub fn validate(&self) -> Result<(), SaliencyError> {
        if self.patch_size == 0 {
            return Err(SaliencyError::Config("patch_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.photo_weight) {
            return Err(SaliencyError::Config(format!("photo_weight must lie in [0, 1], got {}", self.photo_weight)));
        }
        Ok(())
    }
}

/// Row-major `height × width` map of signed sensitivities.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl SaliencyMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        SaliencyMap { width, height, data: vec![0.0; width * height] }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Gradient of `target` w.r.t. every image plane of `input`, in the
/// input's `[C, H, W]` layout.
pub fn input_gradient<T: Real>(
    policy: &Policy<T>,
    input: &PolicyInput<T>,
    hidden: Option<&[T]>,
    target: SaliencyTarget,
) -> Result<Tensor<T>, SaliencyError> {
    let (out, cache) = policy.forward(input, hidden)?;
    let mut og = OutputGrad::zero();
    match target {
        SaliencyTarget::ActionMean => og.dist = Some(out.dist.grad_deterministic(&policy.cfg.action_values())),
        SaliencyTarget::Value => og.value = T::one(),
    }
    let mut grads = policy.zero_grads();
    Ok(policy.backward(&cache, &og, &mut grads)?.0)
}

/// Per-cell saliency from an input gradient: the photometric plane, plus
/// the semantic planes when requested. Policies without a photometric plane
/// contribute zero from it.
pub fn cell_saliency<T: Real>(policy: &Policy<T>, grad: &Tensor<T>, include_semantic: bool) -> SaliencyMap {
    let (h, w) = (policy.height, policy.width);
    let n = h * w;
    let mut map = SaliencyMap::zeros(w, h);
    let photo = !policy.cfg.semseg_only;
    if photo {
        map.data.iter_mut().zip(&grad.data[..n]).for_each(|(m, g)| *m = g.f64());
    }
    if include_semantic {
        let first = usize::from(photo);
        for plane in 0..3 {
            let start = (first + plane) * n;
            map.data.iter_mut().zip(&grad.data[start..start + n]).for_each(|(m, g)| *m += g.f64());
        }
    }
    map
}

fn check_shape<T>(policy: &Policy<T>, obs: &Observation) -> Result<(), SaliencyError> {
    if obs.width != policy.width || obs.height != policy.height || !obs.is_valid() {
        return Err(SaliencyError::Shape {
            expected: format!("{}x{}", policy.width, policy.height),
            found: format!("{}x{}", obs.width, obs.height),
        });
    }
    Ok(())
}

/// Exact gradient of the target w.r.t. each photometric cell of `obs`.
pub fn pixel_saliency<T: Real>(
    policy: &Policy<T>,
    obs: &Observation,
    hidden: Option<&[T]>,
    target: SaliencyTarget,
) -> Result<SaliencyMap, SaliencyError> {
    check_shape(policy, obs)?;
    let input = PolicyInput::from_observation(obs, policy.cfg.semseg_only);
    let grad = input_gradient(policy, &input, hidden, target)?;
    Ok(cell_saliency(policy, &grad, false))
}

/// `ceil(H/p) × ceil(W/p)` grid of per-patch sums (or means over the
/// cells actually covered, for edge patches).
pub fn aggregate_patches(map: &SaliencyMap, patch: usize, reduce: PatchReduce) -> SaliencyMap {
    let p = patch.max(1);
    let (gh, gw) = (map.height.div_ceil(p), map.width.div_ceil(p));
    let mut out = SaliencyMap::zeros(gw, gh);
    let mut counts = vec![0usize; gw * gh];
    for r in 0..map.height {
        for c in 0..map.width {
            let k = (r / p) * gw + c / p;
            out.data[k] += map.get(r, c);
            counts[k] += 1;
        }
    }
    if reduce == PatchReduce::Average {
        out.data.iter_mut().zip(&counts).for_each(|(v, &n)| *v /= n as f64);
    }
    out
}

/// Replicates each grid value over its `patch × patch` block.
pub fn upsample(grid: &SaliencyMap, patch: usize, width: usize, height: usize) -> SaliencyMap {
    let p = patch.max(1);
    let mut out = SaliencyMap::zeros(width, height);
    for r in 0..height {
        for c in 0..width {
            out.data[r * width + c] = grid.get(r / p, c / p);
        }
    }
    out
}

/// Patch saliency at full resolution: one backward pass, then aggregation.
pub fn patch_saliency<T: Real>(
    policy: &Policy<T>,
    obs: &Observation,
    hidden: Option<&[T]>,
    cfg: &SaliencyConfig,
) -> Result<SaliencyMap, SaliencyError> {
    cfg.validate()?;
    check_shape(policy, obs)?;
    let input = PolicyInput::from_observation(obs, policy.cfg.semseg_only);
    let grad = input_gradient(policy, &input, hidden, cfg.target)?;
    let pixels = cell_saliency(policy, &grad, cfg.include_semantic);
    Ok(patch_map(&pixels, cfg))
}

/// Aggregation and upsampling of a pixel map under `cfg`.
pub fn patch_map(pixels: &SaliencyMap, cfg: &SaliencyConfig) -> SaliencyMap {
    let grid = aggregate_patches(pixels, cfg.patch_size, cfg.reduce);
    upsample(&grid, cfg.patch_size, pixels.width, pixels.height)
}

/// Overlay intensities: the map is scaled symmetrically to `[-1, 1]` and
/// drawn about mid-gray, white positive and black negative, with
/// `photo_weight` of the contrast modulated by the photometric image. A
/// zero map is uniform mid-gray whatever the image.
pub fn overlay_pixels(obs: &Observation, map: &SaliencyMap, photo_weight: f64) -> Vec<u8> {
    assert_eq!((obs.width, obs.height), (map.width, map.height), "overlay shape mismatch");
    let scale = map.max_abs();
    let k = if scale > 0.0 { 1.0 / scale } else { 0.0 };
    map.data
        .iter()
        .zip(&obs.photometric)
        .map(|(&s, &photo)| {
            let contrast = 1.0 - photo_weight + photo_weight * photo as f64;
            pgm::to_gray(0.5 + 0.5 * s * k * contrast)
        })
        .collect()
}

/// Writes the overlay as an 8-bit PGM.
pub fn render_overlay(obs: &Observation, map: &SaliencyMap, photo_weight: f64, path: &Path) -> Result<(), SaliencyError> {
    let pixels = overlay_pixels(obs, map, photo_weight);
    pgm::write_pgm(path, obs.width, obs.height, &pixels).map_err(|source| SaliencyError::Io { path: path.display().to_string(), source })
}

/// One overlay per frame of `log`, named `frame_<k>.pgm`. Recurrent state
/// is carried through the log in order; the gradients then run in parallel.
pub fn saliency_batch(
    policy: &Arc<Policy<f32>>,
    log: &DriveLog,
    cfg: &SaliencyConfig,
    out_dir: &Path,
    pool: &Workers,
) -> Result<Vec<PathBuf>, SaliencyError> {
    cfg.validate()?;
    if !log.has_observations() {
        return Err(SaliencyError::MissingObservations);
    }
    std::fs::create_dir_all(out_dir).map_err(|source| SaliencyError::Io { path: out_dir.display().to_string(), source })?;
    let observations: Vec<&Observation> = log.frames.iter().map(|f| f.observation.as_ref().expect("checked above")).collect();
    let mut hiddens = Vec::with_capacity(observations.len());
    let mut hidden = policy.initial_hidden();
    for obs in &observations {
        check_shape(policy, obs)?;
        hiddens.push(hidden.clone());
        if hidden.is_some() {
            let input = PolicyInput::from_observation(obs, policy.cfg.semseg_only);
            hidden = policy.forward(&input, hidden.as_deref())?.0.hidden;
        }
    }
    let results = pool.map(observations.len(), |k| {
        let map = patch_saliency(policy.as_ref(), observations[k], hiddens[k].as_deref(), cfg)?;
        let path = out_dir.join(format!("frame_{k:05}.pgm"));
        render_overlay(observations[k], &map, cfg.photo_weight, &path)?;
        Ok(path)
    });
    results.into_iter().collect()
}

/// Largest relative error between the pixel map of `input` and central
/// differences of the target w.r.t. each photometric cell (step `h`).
pub fn pixel_grad_check(
    policy: &Policy<f64>,
    input: &PolicyInput<f64>,
    hidden: Option<&[f64]>,
    target: SaliencyTarget,
    h: f64,
) -> Result<f64, SaliencyError> {
    let grad = input_gradient(policy, input, hidden, target)?;
    let analytic = cell_saliency(policy, &grad, false);
    let cells = policy.width * policy.height;
    let mut err = 0.0f64;
    for i in 0..cells {
        let numeric = if policy.cfg.semseg_only { 0.0 } else { directional_difference(policy, input, hidden, target, &[i], h)? };
        err = err.max(relative_error(analytic.data[i], numeric));
    }
    Ok(err)
}

/// Largest relative error between the patch grid under `cfg` and central
/// differences along each patch's indicator direction (divided by the
/// cell count for averages).
pub fn patch_grad_check(
    policy: &Policy<f64>,
    input: &PolicyInput<f64>,
    hidden: Option<&[f64]>,
    cfg: &SaliencyConfig,
    h: f64,
) -> Result<f64, SaliencyError> {
    cfg.validate()?;
    let grad = input_gradient(policy, input, hidden, cfg.target)?;
    let pixels = cell_saliency(policy, &grad, false);
    let grid = aggregate_patches(&pixels, cfg.patch_size, cfg.reduce);
    let p = cfg.patch_size;
    let mut err = 0.0f64;
    for gr in 0..grid.height {
        for gc in 0..grid.width {
            let mut cells = Vec::new();
            for r in gr * p..((gr + 1) * p).min(policy.height) {
                for c in gc * p..((gc + 1) * p).min(policy.width) {
                    cells.push(r * policy.width + c);
                }
            }
            let mut numeric =
                if policy.cfg.semseg_only { 0.0 } else { directional_difference(policy, input, hidden, cfg.target, &cells, h)? };
            if cfg.reduce == PatchReduce::Average {
                numeric /= cells.len() as f64;
            }
            err = err.max(relative_error(grid.get(gr, gc), numeric));
        }
    }
    Ok(err)
}

fn target_value(
    policy: &Policy<f64>,
    input: &PolicyInput<f64>,
    hidden: Option<&[f64]>,
    target: SaliencyTarget,
) -> Result<f64, SaliencyError> {
    let out = policy.forward(input, hidden)?.0;
    Ok(match target {
        SaliencyTarget::ActionMean => out.dist.deterministic(&policy.cfg.action_values()),
        SaliencyTarget::Value => out.value,
    })
}

/// Central difference along the sum of the photometric `cells`.
fn directional_difference(
    policy: &Policy<f64>,
    input: &PolicyInput<f64>,
    hidden: Option<&[f64]>,
    target: SaliencyTarget,
    cells: &[usize],
    h: f64,
) -> Result<f64, SaliencyError> {
    let mut probe = input.clone();
    cells.iter().for_each(|&i| probe.image.data[i] = input.image.data[i] + h);
    let up = target_value(policy, &probe, hidden, target)?;
    cells.iter().for_each(|&i| probe.image.data[i] = input.image.data[i] - h);
    let down = target_value(policy, &probe, hidden, target)?;
    Ok((up - down) / (2.0 * h))
}

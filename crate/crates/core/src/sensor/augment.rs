use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Observation, SemClass, WeatherPreset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoutConfig {
    pub max_patches: usize,
    /// Largest patch side as a fraction of the grid side.
    pub max_patch_fraction: f64,
}

/// Weather pool and camera-input augmentations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisualRandomization {
    pub weather_presets: Vec<WeatherPreset>,
    pub gaussian_noise_std: f64,
    /// Photometric values are scaled by a factor drawn from `1 ± jitter`.
    pub brightness_jitter: f64,
    /// Box-blur kernel sides to draw from; 1 means no blur.
    pub blur_kernel_sizes: Vec<usize>,
    pub cutout: CutoutConfig,
}

impl Default for VisualRandomization {
    fn default() -> Self {
        VisualRandomization {
            weather_presets: WeatherPreset::defaults(),
            gaussian_noise_std: 0.05,
            brightness_jitter: 0.25,
            blur_kernel_sizes: vec![1, 1, 3],
            cutout: CutoutConfig { max_patches: 2, max_patch_fraction: 0.2 },
        }
    }
}

impl VisualRandomization {
    /// No augmentation at all; presets kept.
    pub fn none() -> Self {
        VisualRandomization {
            gaussian_noise_std: 0.0,
            brightness_jitter: 0.0,
            blur_kernel_sizes: vec![],
            cutout: CutoutConfig { max_patches: 0, max_patch_fraction: 0.2 },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (i, p) in self.weather_presets.iter().enumerate() {
            if !(p.brightness_scale > 0.0 && p.contrast_scale > 0.0) {
                return Err(format!("weather preset {i}: scales must be positive"));
            }
        }
        if !(self.cutout.max_patch_fraction > 0.0 && self.cutout.max_patch_fraction <= 0.5) {
            return Err("cutout.max_patch_fraction must lie in (0, 0.5]".into());
        }
        if self.gaussian_noise_std < 0.0 || self.brightness_jitter < 0.0 || self.brightness_jitter >= 1.0 {
            return Err("noise std and brightness jitter must be in range".into());
        }
        if self.blur_kernel_sizes.iter().any(|&k| k == 0 || k % 2 == 0) {
            return Err("blur kernel sizes must be odd and positive".into());
        }
        Ok(())
    }
}

/// Brightness jitter, gaussian noise, box blur and cutout, in that order.
pub fn augment<R: Rng + ?Sized>(obs: &Observation, cfg: &VisualRandomization, rng: &mut R) -> Observation {
    let mut out = obs.clone();
    let (w, h) = (obs.width, obs.height);
    if cfg.brightness_jitter > 0.0 {
        let factor = 1.0 + rng.random_range(-cfg.brightness_jitter..=cfg.brightness_jitter) as f32;
        out.photometric.iter_mut().for_each(|v| *v *= factor);
    }
    if cfg.gaussian_noise_std > 0.0 {
        let n = Normal::new(0.0, cfg.gaussian_noise_std).unwrap();
        out.photometric.iter_mut().for_each(|v| *v += n.sample(rng) as f32);
    }
    if !cfg.blur_kernel_sizes.is_empty() {
        let k = cfg.blur_kernel_sizes[rng.random_range(0..cfg.blur_kernel_sizes.len())];
        if k > 1 {
            out.photometric = box_blur(&out.photometric, w, h, k);
        }
    }
    if cfg.cutout.max_patches > 0 {
        let count = rng.random_range(0..=cfg.cutout.max_patches);
        let max_h = ((h as f64 * cfg.cutout.max_patch_fraction).floor() as usize).max(1);
        let max_w = ((w as f64 * cfg.cutout.max_patch_fraction).floor() as usize).max(1);
        for _ in 0..count {
            let ph = rng.random_range(1..=max_h);
            let pw = rng.random_range(1..=max_w);
            let r0 = rng.random_range(0..=h - ph);
            let c0 = rng.random_range(0..=w - pw);
            cutout_patch(&mut out, r0, c0, ph, pw);
        }
    }
    out.photometric.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    out
}

/// Blanks a rectangle: photometric 0, semantic OBSTACLE.
pub fn cutout_patch(obs: &mut Observation, r0: usize, c0: usize, ph: usize, pw: usize) {
    for r in r0..(r0 + ph).min(obs.height) {
        for c in c0..(c0 + pw).min(obs.width) {
            obs.photometric[r * obs.width + c] = 0.0;
            obs.semantic.classes[r * obs.width + c] = SemClass::Obstacle;
        }
    }
}

/// k x k mean filter; windows are truncated at the border.
pub fn box_blur(img: &[f32], w: usize, h: usize, k: usize) -> Vec<f32> {
    let rad = (k / 2) as isize;
    let mut out = vec![0.0; img.len()];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let mut sum = 0.0;
            let mut n = 0;
            for dr in -rad..=rad {
                for dc in -rad..=rad {
                    let (rr, cc) = (r + dr, c + dc);
                    if rr >= 0 && rr < h as isize && cc >= 0 && cc < w as isize {
                        sum += img[rr as usize * w + cc as usize];
                        n += 1;
                    }
                }
            }
            out[r as usize * w + c as usize] = sum / n as f32;
        }
    }
    out
}

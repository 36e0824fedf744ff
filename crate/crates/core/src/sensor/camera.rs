use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{segment_hits_rect, Aabb, Vec2};
use crate::world::WorldMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Quality {
    Low,
    Epic,
}

/// Planar pose of the sensor origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

/// Bird's-eye-forward grid in the vehicle frame. Row 0 is the farthest row
/// ahead; column 0 is the leftmost column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    pub forward_extent: f64,
    pub lateral_extent: f64,
    pub mount_offset: f64,
    pub quality: Quality,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig { width: 134, height: 84, forward_extent: 21.0, lateral_extent: 16.75, mount_offset: 1.0, quality: Quality::Low }
    }
}

impl CameraConfig {
    /// 64x40 grid for quick experiments and CI.
    pub fn desk() -> Self {
        CameraConfig { width: 64, height: 40, forward_extent: 20.0, lateral_extent: 16.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.width < 16 || self.height < 16 {
            return Err(format!("camera grid {}x{} below 16x16", self.width, self.height));
        }
        if !(self.forward_extent > 0.0 && self.lateral_extent > 0.0) {
            return Err("camera extents must be positive".into());
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    /// Pose of the grid origin for a vehicle at `position`/`heading`.
    pub fn mount_pose(&self, position: Vec2, heading: f64) -> Pose {
        Pose { position: position + Vec2::from_angle(heading) * self.mount_offset, heading }
    }

    /// Forward/lateral extent of row `r` and column `c` in the sensor frame:
    /// `(u_min, u_max, v_min, v_max)`.
    pub fn cell_rect(&self, r: usize, c: usize) -> (f64, f64, f64, f64) {
        let h = self.height as f64;
        let w = self.width as f64;
        let u0 = self.forward_extent * (h - r as f64 - 1.0) / h;
        let u1 = self.forward_extent * (h - r as f64) / h;
        let v0 = self.lateral_extent * (0.5 - (c as f64 + 1.0) / w);
        let v1 = self.lateral_extent * (0.5 - c as f64 / w);
        (u0, u1, v0, v1)
    }

    /// World position of the center of cell (r, c).
    pub fn cell_center(&self, pose: &Pose, r: usize, c: usize) -> Vec2 {
        let h = self.height as f64;
        let w = self.width as f64;
        let u = self.forward_extent * (h - r as f64 - 0.5) / h;
        let v = self.lateral_extent * (0.5 - (c as f64 + 0.5) / w);
        let f = Vec2::from_angle(pose.heading);
        pose.position + f * u + f.perp() * v
    }

    fn supersampled(&self) -> CameraConfig {
        CameraConfig { width: self.width * 2, height: self.height * 2, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum SemClass {
    Road = 0,
    Marking = 1,
    Obstacle = 2,
}

impl SemClass {
    pub fn from_u8(v: u8) -> Option<SemClass> {
        match v {
            0 => Some(SemClass::Road),
            1 => Some(SemClass::Marking),
            2 => Some(SemClass::Obstacle),
            _ => None,
        }
    }

    /// Gray level of the class before weather scaling.
    pub fn base_intensity(self) -> f64 {
        match self {
            SemClass::Road => 0.4,
            SemClass::Marking => 0.9,
            SemClass::Obstacle => 0.1,
        }
    }
}

/// Row-major H x W grid of semantic classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticGrid {
    pub width: usize,
    pub height: usize,
    pub classes: Vec<SemClass>,
}

impl SemanticGrid {
    pub fn filled(width: usize, height: usize, class: SemClass) -> Self {
        SemanticGrid { width, height, classes: vec![class; width * height] }
    }

    pub fn get(&self, r: usize, c: usize) -> SemClass {
        self.classes[r * self.width + c]
    }

    /// One-hot planes in channel-major order: road, marking, obstacle.
    pub fn one_hot(&self) -> Vec<f32> {
        let n = self.classes.len();
        let mut out = vec![0.0; 3 * n];
        for (i, c) in self.classes.iter().enumerate() {
            out[*c as usize * n + i] = 1.0;
        }
        out
    }
}

/// Rasterizes the map around `pose`. A cell is MARKING when a marking stroke
/// crosses it, otherwise ROAD when its center is drivable, otherwise OBSTACLE.
pub fn render_semantic(map: &WorldMap, pose: &Pose, cam: &CameraConfig) -> SemanticGrid {
    let (w, h) = (cam.width, cam.height);
    let mut grid = SemanticGrid::filled(w, h, SemClass::Obstacle);
    let f = Vec2::from_angle(pose.heading);
    let l = f.perp();
    let corners = [
        pose.position + l * (cam.lateral_extent / 2.0),
        pose.position - l * (cam.lateral_extent / 2.0),
        pose.position + f * cam.forward_extent + l * (cam.lateral_extent / 2.0),
        pose.position + f * cam.forward_extent - l * (cam.lateral_extent / 2.0),
    ];
    let view = Aabb::from_points(&corners);
    if !view.intersects(&map.bounds()) {
        return grid;
    }
    let (hf, wf) = (h as f64, w as f64);
    let cols: Vec<Vec2> = (0..w).map(|c| l * (cam.lateral_extent * (0.5 - (c as f64 + 0.5) / wf))).collect();
    for r in 0..h {
        let row = pose.position + f * (cam.forward_extent * (hf - r as f64 - 0.5) / hf);
        for (c, &lv) in cols.iter().enumerate() {
            if map.is_drivable(row + lv) {
                grid.classes[r * w + c] = SemClass::Road;
            }
        }
    }
    let mut near = Vec::new();
    map.strokes_near(&view, &mut near);
    let du = cam.forward_extent / h as f64;
    let dv = cam.lateral_extent / w as f64;
    for &i in &near {
        let (a, b) = map.strokes()[i];
        let to_cam = |p: Vec2| {
            let d = p - pose.position;
            Vec2::new(d.dot(f), d.dot(l))
        };
        let (a, b) = (to_cam(a), to_cam(b));
        // Candidate rows/cols from the stroke's extent in the sensor frame.
        let u_lo = a.x.min(b.x);
        let u_hi = a.x.max(b.x);
        let v_lo = a.y.min(b.y);
        let v_hi = a.y.max(b.y);
        if u_hi < 0.0 || u_lo > cam.forward_extent || v_hi < -cam.lateral_extent / 2.0 || v_lo > cam.lateral_extent / 2.0 {
            continue;
        }
        let row_of = |u: f64| (h as f64 - u / du).floor();
        let col_of = |v: f64| ((cam.lateral_extent / 2.0 - v) / dv).floor();
        let r0 = (row_of(u_hi) - 1.0).clamp(0.0, h as f64 - 1.0) as usize;
        let r1 = (row_of(u_lo) + 1.0).clamp(0.0, h as f64 - 1.0) as usize;
        let c0 = (col_of(v_hi) - 1.0).clamp(0.0, w as f64 - 1.0) as usize;
        let c1 = (col_of(v_lo) + 1.0).clamp(0.0, w as f64 - 1.0) as usize;
        for r in r0..=r1 {
            for c in c0..=c1 {
                let (u0, u1, v0, v1) = cam.cell_rect(r, c);
                if segment_hits_rect(a, b, Vec2::new(u0, v0), Vec2::new(u1, v1)) {
                    grid.classes[r * w + c] = SemClass::Marking;
                }
            }
        }
    }
    grid
}

/// Visual preset standing in for a simulator weather setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherPreset {
    pub brightness_scale: f64,
    pub contrast_scale: f64,
    pub texture_noise_std: f64,
}

impl WeatherPreset {
    pub const NEUTRAL: WeatherPreset = WeatherPreset { brightness_scale: 1.0, contrast_scale: 1.0, texture_noise_std: 0.0 };

    /// Ten presets; the last one is kept out of training pools and is darker
    /// and flatter than any of the others.
    pub fn defaults() -> Vec<WeatherPreset> {
        [
            (1.0, 1.0, 0.02),
            (0.85, 1.0, 0.03),
            (1.15, 0.9, 0.02),
            (0.7, 1.1, 0.04),
            (1.3, 0.8, 0.03),
            (0.9, 1.25, 0.05),
            (1.1, 0.75, 0.02),
            (0.8, 0.85, 0.06),
            (1.2, 1.15, 0.04),
            (0.55, 0.6, 0.08),
        ]
        .into_iter()
        .map(|(b, c, n)| WeatherPreset { brightness_scale: b, contrast_scale: c, texture_noise_std: n })
        .collect()
    }

    fn shade<R: Rng + ?Sized>(&self, base: f64, rng: &mut R) -> f32 {
        let noise = if self.texture_noise_std > 0.0 { Normal::new(0.0, self.texture_noise_std).unwrap().sample(rng) } else { 0.0 };
        let v = self.brightness_scale * (0.5 + self.contrast_scale * (base - 0.5) + noise);
        v.clamp(0.0, 1.0) as f32
    }
}

/// Photometric channel from an already rendered LOW-resolution grid. EPIC
/// averages the base intensities of a 2x supersampled grid per cell.
pub(crate) fn photometric_from<R: Rng + ?Sized>(
    map: &WorldMap,
    pose: &Pose,
    cam: &CameraConfig,
    low: &SemanticGrid,
    preset: &WeatherPreset,
    rng: &mut R,
) -> Vec<f32> {
    let base: Vec<f64> = match cam.quality {
        Quality::Low => low.classes.iter().map(|c| c.base_intensity()).collect(),
        Quality::Epic => {
            let hi = render_semantic(map, pose, &cam.supersampled());
            let w2 = cam.width * 2;
            (0..cam.height)
                .flat_map(|r| (0..cam.width).map(move |c| (r, c)))
                .map(|(r, c)| {
                    let s = |dr: usize, dc: usize| hi.classes[(2 * r + dr) * w2 + 2 * c + dc].base_intensity();
                    (s(0, 0) + s(0, 1) + s(1, 0) + s(1, 1)) / 4.0
                })
                .collect()
        }
    };
    base.into_iter().map(|b| preset.shade(b, rng)).collect()
}

pub fn render_photometric<R: Rng + ?Sized>(
    map: &WorldMap,
    pose: &Pose,
    cam: &CameraConfig,
    preset: &WeatherPreset,
    rng: &mut R,
) -> Vec<f32> {
    let low = render_semantic(map, pose, cam);
    photometric_from(map, pose, cam, &low, preset, rng)
}

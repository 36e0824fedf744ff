use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geometry::{point_in_polygon, segments_intersect, Vec2};
use crate::vehicle::{SampledDynamics, VehicleParams, VehicleState};
use crate::world::{bundled_map, bundled_scenarios, MapData, Marking, MarkingKind, Route, RouteConfig};

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Vec2> {
    vec![Vec2::new(x0, y0), Vec2::new(x1, y0), Vec2::new(x1, y1), Vec2::new(x0, y1)]
}

fn wide_road() -> WorldMap {
    WorldMap::new(MapData {
        id: "wide".into(),
        drivable_polygons: vec![rect(-50., -20., 150., 20.)],
        lane_centerlines: vec![],
        markings: vec![Marking { polyline: vec![Vec2::new(-50., 0.1), Vec2::new(150., 0.1)], kind: MarkingKind::Single }],
        obstacles: vec![rect(60., 10., 64., 14.)],
        intersections: vec![],
    })
    .unwrap()
}

fn world_cell_polygon(cam: &CameraConfig, pose: &Pose, r: usize, c: usize) -> Vec<Vec2> {
    let (u0, u1, v0, v1) = cam.cell_rect(r, c);
    let f = Vec2::from_angle(pose.heading);
    let l = f.perp();
    [(u0, v0), (u1, v0), (u1, v1), (u0, v1)].iter().map(|&(u, v)| pose.position + f * u + l * v).collect()
}

/// Brute force over every polygon and stroke, no spatial index.
pub(crate) fn semantic_oracle(map: &WorldMap, pose: &Pose, cam: &CameraConfig) -> Vec<SemClass> {
    let mut out = Vec::new();
    for r in 0..cam.height {
        for c in 0..cam.width {
            let cell = world_cell_polygon(cam, pose, r, c);
            let marked = map.strokes().iter().any(|&(a, b)| {
                point_in_polygon(a, &cell)
                    || point_in_polygon(b, &cell)
                    || (0..4).any(|k| segments_intersect(a, b, cell[k], cell[(k + 1) % 4]))
            });
            let p = cam.cell_center(pose, r, c);
            let drivable = map.drivable_polygons().iter().any(|poly| point_in_polygon(p, poly))
                && !map.obstacles().iter().any(|poly| point_in_polygon(p, poly));
            out.push(if marked {
                SemClass::Marking
            } else if drivable {
                SemClass::Road
            } else {
                SemClass::Obstacle
            });
        }
    }
    out
}

#[test]
fn far_away_pose_sees_only_obstacles() {
    let map = wide_road();
    let g = render_semantic(&map, &Pose { position: Vec2::new(5000., 5000.), heading: 0.3 }, &CameraConfig::desk());
    assert!(g.classes.iter().all(|&c| c == SemClass::Obstacle));
}

#[test]
fn centered_on_wide_road_is_road_and_marking() {
    let map = wide_road();
    let cam = CameraConfig::desk();
    let g = render_semantic(&map, &Pose { position: Vec2::new(0., 0.), heading: 0.0 }, &cam);
    let mut marking_cols = std::collections::BTreeSet::new();
    for r in 0..cam.height {
        for c in 0..cam.width {
            match g.get(r, c) {
                SemClass::Marking => {
                    marking_cols.insert(c);
                }
                SemClass::Road => {}
                SemClass::Obstacle => panic!("obstacle at {r},{c}"),
            }
        }
    }
    // Stroke at lateral +0.1 m falls in the column just left of center.
    assert_eq!(marking_cols.into_iter().collect::<Vec<_>>(), vec![cam.width / 2 - 1]);
}

#[test]
fn semantic_matches_brute_force() {
    let map = bundled_map("holdout_town").unwrap();
    let cam = CameraConfig::desk();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..8 {
        let pose = Pose {
            position: Vec2::new(rng.random_range(-10.0..220.0), rng.random_range(-360.0..-280.0)),
            heading: rng.random_range(-3.1..3.1),
        };
        let g = render_semantic(&map, &pose, &cam);
        assert_eq!(g.classes, semantic_oracle(&map, &pose, &cam), "pose {pose:?}");
    }
}

#[test]
fn semantic_is_rigid_motion_equivariant() {
    let base = wide_road();
    let (shift, turn) = (Vec2::new(37.0, -12.0), 0.7);
    let xf = |p: Vec2| p.rotate(turn) + shift;
    let d = base.data();
    let moved = WorldMap::new(MapData {
        id: "moved".into(),
        drivable_polygons: d.drivable_polygons.iter().map(|p| p.iter().map(|&q| xf(q)).collect()).collect(),
        lane_centerlines: vec![],
        markings: d.markings.iter().map(|m| Marking { polyline: m.polyline.iter().map(|&q| xf(q)).collect(), kind: m.kind }).collect(),
        obstacles: d.obstacles.iter().map(|p| p.iter().map(|&q| xf(q)).collect()).collect(),
        intersections: vec![],
    })
    .unwrap();
    let cam = CameraConfig::desk();
    for (x, y, h) in [(10.0, 3.3, 0.2), (55.0, 7.0, 0.05), (-20.0, -9.0, -0.4)] {
        let a = render_semantic(&base, &Pose { position: Vec2::new(x, y), heading: h }, &cam);
        let b = render_semantic(&moved, &Pose { position: xf(Vec2::new(x, y)), heading: h + turn }, &cam);
        let diff = a.classes.iter().zip(&b.classes).filter(|(p, q)| p != q).count();
        assert_eq!(diff, 0, "pose ({x},{y},{h})");
    }
}

#[test]
fn neutral_low_render_is_exact_base() {
    let map = bundled_map("straight_curve").unwrap();
    let cam = CameraConfig::desk();
    let pose = Pose { position: Vec2::new(10.0, -2.5), heading: 0.0 };
    let g = render_semantic(&map, &pose, &cam);
    let p = render_photometric(&map, &pose, &cam, &WeatherPreset::NEUTRAL, &mut ChaCha8Rng::seed_from_u64(0));
    for (v, c) in p.iter().zip(&g.classes) {
        assert_eq!(*v, c.base_intensity() as f32);
    }
}

#[test]
fn zero_brightness_is_black() {
    let map = bundled_map("straight_curve").unwrap();
    let preset = WeatherPreset { brightness_scale: 0.0, contrast_scale: 1.0, texture_noise_std: 0.1 };
    let p = render_photometric(
        &map,
        &Pose { position: Vec2::new(10.0, -2.5), heading: 0.0 },
        &CameraConfig::desk(),
        &preset,
        &mut ChaCha8Rng::seed_from_u64(0),
    );
    assert!(p.iter().all(|&v| v == 0.0));
}

#[test]
fn epic_antialiases_diagonal_edge() {
    let map = wide_road();
    let pose = Pose { position: Vec2::new(0.0, 12.0), heading: 0.6 };
    let low_cam = CameraConfig::desk();
    let epic_cam = CameraConfig { quality: Quality::Epic, ..CameraConfig::desk() };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let low = render_photometric(&map, &pose, &low_cam, &WeatherPreset::NEUTRAL, &mut rng);
    let epic = render_photometric(&map, &pose, &epic_cam, &WeatherPreset::NEUTRAL, &mut rng);
    let bases = [0.1f32, 0.4, 0.9];
    assert!(low.iter().all(|v| bases.contains(v)));
    let intermediate = epic.iter().filter(|v| !bases.contains(v)).count();
    assert!(intermediate > 10, "{intermediate}");
}

fn sample_obs() -> Observation {
    let map = bundled_map("straight_curve").unwrap();
    let sc = bundled_scenarios().into_iter().find(|s| s.name == "train_east").unwrap();
    let route = Route::new(&sc, &map, &RouteConfig::default()).unwrap();
    let params = VehicleParams::default();
    let dynamics = SampledDynamics::nominal(&params);
    let state = VehicleState::new(sc.checkpoints[3], 0.0, 5.6, &params, &dynamics, 0.1);
    let cam = CameraConfig::desk();
    let setup =
        SensorSetup { camera: &cam, preset: &WeatherPreset::defaults()[0], quality: Quality::Low, augmentation: None, semseg_only: false };
    assemble_observation(&map, &state, &route, 3.0, &setup, &dynamics, &mut ChaCha8Rng::seed_from_u64(4))
}

#[test]
fn augment_zero_magnitudes_is_identity() {
    let obs = sample_obs();
    let cfg = VisualRandomization::none();
    assert_eq!(augment(&obs, &cfg, &mut ChaCha8Rng::seed_from_u64(1)), obs);
}

#[test]
fn cutout_zeroes_exact_patch() {
    let mut obs = sample_obs();
    obs.photometric.iter_mut().for_each(|v| *v = v.max(0.05));
    cutout_patch(&mut obs, 5, 7, 4, 4);
    assert_eq!(obs.photometric.iter().filter(|&&v| v == 0.0).count(), 16);
    assert_eq!(obs.semantic.get(6, 8), SemClass::Obstacle);
}

#[test]
fn augment_is_seeded_and_keeps_shape() {
    let obs = sample_obs();
    let cfg = VisualRandomization { cutout: CutoutConfig { max_patches: 3, max_patch_fraction: 0.3 }, ..Default::default() };
    let a = augment(&obs, &cfg, &mut ChaCha8Rng::seed_from_u64(8));
    let b = augment(&obs, &cfg, &mut ChaCha8Rng::seed_from_u64(8));
    assert_eq!(a, b);
    assert!(a.is_valid());
    assert_eq!(a.photometric.len(), obs.photometric.len());
    let one_hot = a.semantic.one_hot();
    let n = a.width * a.height;
    for i in 0..n {
        assert_eq!(one_hot[i] + one_hot[n + i] + one_hot[2 * n + i], 1.0);
    }
}

#[test]
fn evaluation_observation_is_clean() {
    let obs = sample_obs();
    assert_eq!(obs.speed, 5.6);
    assert_eq!(obs.command_one_hot(), [1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn semseg_only_zeroes_photometric() {
    let map = bundled_map("straight_curve").unwrap();
    let sc = bundled_scenarios().into_iter().find(|s| s.name == "train_east").unwrap();
    let route = Route::new(&sc, &map, &RouteConfig::default()).unwrap();
    let params = VehicleParams::default();
    let dynamics = SampledDynamics::nominal(&params);
    let state = VehicleState::new(sc.checkpoints[3], 0.0, 5.6, &params, &dynamics, 0.1);
    let cam = CameraConfig::desk();
    let setup =
        SensorSetup { camera: &cam, preset: &WeatherPreset::defaults()[0], quality: Quality::Low, augmentation: None, semseg_only: true };
    let obs = assemble_observation(&map, &state, &route, 3.0, &setup, &dynamics, &mut ChaCha8Rng::seed_from_u64(4));
    assert_eq!(obs.photometric.len(), cam.cells());
    assert!(obs.photometric.iter().all(|&v| v == 0.0));
}

/// Marches along each ray in 1 cm steps.
pub(crate) fn depth_oracle(map: &WorldMap, pose: &Pose, n: usize, max_range: f64) -> Vec<f64> {
    ray_bearings(n)
        .into_iter()
        .map(|b| {
            let dir = Vec2::from_angle(pose.heading + b);
            let steps = (max_range / 0.01).round() as usize;
            (0..=steps).map(|k| k as f64 * 0.01).find(|&t| !map.is_drivable(pose.position + dir * t)).unwrap_or(max_range) / max_range
        })
        .collect()
}

#[test]
fn depth_open_area_and_wall() {
    let open = WorldMap::new(MapData {
        id: "open".into(),
        drivable_polygons: vec![rect(-100., -100., 100., 100.)],
        lane_centerlines: vec![],
        markings: vec![],
        obstacles: vec![rect(5., -1., 6., 1.)],
        intersections: vec![],
    })
    .unwrap();
    let away = Pose { position: Vec2::ZERO, heading: std::f64::consts::PI };
    assert!(ray_depths(&open, &away, 7, 20.0).iter().all(|&d| d == 1.0));
    let facing = Pose { position: Vec2::ZERO, heading: 0.0 };
    assert_eq!(ray_depths(&open, &facing, 7, 20.0)[3], 0.25);
}

#[test]
fn depth_matches_ray_march() {
    let map = bundled_map("holdout_town").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let s = rng.random_range(0..map.lane_centerlines()[0].len());
        let p = map.lane_centerlines()[0][s];
        let pose = Pose { position: p, heading: rng.random_range(-3.1..3.1) };
        let a = ray_depths(&map, &pose, 9, 20.0);
        let b = depth_oracle(&map, &pose, 9, 20.0);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() * 20.0 <= 0.02, "{x} vs {y}");
        }
    }
}

#[test]
fn depth_shrinks_as_wall_approaches() {
    let mut last = f64::INFINITY;
    for k in 0..30 {
        let x = 19.0 - k as f64 * 0.6;
        let map = WorldMap::new(MapData {
            id: "w".into(),
            drivable_polygons: vec![rect(-50., -50., 50., 50.)],
            lane_centerlines: vec![],
            markings: vec![],
            obstacles: vec![rect(x, -3., x + 1.0, 3.)],
            intersections: vec![],
        })
        .unwrap();
        let d = ray_depths(&map, &Pose { position: Vec2::ZERO, heading: 0.0 }, 5, 20.0)[2];
        assert!(d <= last);
        last = d;
    }
}

#[test]
fn pgm_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let px: Vec<u8> = (0..=255).collect();
    let p = dir.path().join("a.pgm");
    write_pgm(&p, 16, 16, &px).unwrap();
    assert_eq!(read_pgm(&p).unwrap(), (16, 16, px));
    let obs = sample_obs();
    dump_observation(&obs, dir.path(), "frame0").unwrap();
    assert!(dir.path().join("frame0.json").exists());
    assert_eq!(read_pgm(&dir.path().join("frame0_semantic.pgm")).unwrap().0, obs.width);
}

#[test]
fn depth_ignores_seams_between_adjacent_polygons() {
    // This ray crosses a shared polygon edge where the two computed hits
    // differ only by rounding.
    let map = bundled_map("holdout_town").unwrap();
    let pose = Pose { position: Vec2::new(106.68620209908431, -334.15295981471786), heading: -0.13510824217614736 };
    let (a, b) = (ray_depths(&map, &pose, 9, 20.0), depth_oracle(&map, &pose, 9, 20.0));
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() * 20.0 <= 0.02, "{x} vs {y}");
    }
}

use super::Pose;
use crate::geometry::{ray_segment_hit, Aabb, Vec2};
use crate::world::WorldMap;

/// Hits closer than this along a ray are one crossing.
const SEAM_TOLERANCE: f64 = 1e-7;

/// Half-angle of the fan of depth rays.
pub const RAY_FAN_HALF_ANGLE: f64 = std::f64::consts::PI / 3.0;

/// Ray bearings relative to the heading, evenly spread over ±60 degrees.
pub fn ray_bearings(n_rays: usize) -> Vec<f64> {
    assert!(n_rays >= 1, "at least one ray");
    if n_rays == 1 {
        return vec![0.0];
    }
    (0..n_rays).map(|i| -RAY_FAN_HALF_ANGLE + 2.0 * RAY_FAN_HALF_ANGLE * i as f64 / (n_rays - 1) as f64).collect()
}

/// Distance along each ray to the first non-drivable point, capped at
/// `max_range` and divided by it.
///
/// Every polygon edge the ray crosses splits it into intervals; drivability
/// is constant inside an interval, so testing interval midpoints is exact.
pub fn ray_depths(map: &WorldMap, pose: &Pose, n_rays: usize, max_range: f64) -> Vec<f64> {
    let reach = Aabb { min: pose.position - Vec2::new(max_range, max_range), max: pose.position + Vec2::new(max_range, max_range) };
    let (drivable, obstacles) = map.polygons_near(&reach);
    let polys: Vec<&Vec<Vec2>> =
        drivable.iter().map(|&i| &map.drivable_polygons()[i]).chain(obstacles.iter().map(|&i| &map.obstacles()[i])).collect();
    ray_bearings(n_rays)
        .into_iter()
        .map(|b| {
            let dir = Vec2::from_angle(pose.heading + b);
            let mut hits: Vec<f64> = vec![0.0];
            for poly in &polys {
                for k in 0..poly.len() {
                    if let Some(t) = ray_segment_hit(pose.position, dir, poly[k], poly[(k + 1) % poly.len()]) {
                        if t < max_range {
                            hits.push(t);
                        }
                    }
                }
            }
            hits.push(max_range);
            hits.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // Shared edges of adjacent polygons give near-equal hits; the
            // sliver between them is a seam, not a gap in the road.
            hits.dedup_by(|b, a| *b - *a < SEAM_TOLERANCE);
            let mut depth = max_range;
            for w in hits.windows(2) {
                let mid = pose.position + dir * (0.5 * (w[0] + w[1]));
                if !map.is_drivable(mid) {
                    depth = w[0];
                    break;
                }
            }
            depth / max_range
        })
        .collect()
}

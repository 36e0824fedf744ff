use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bundled::{trim, END_MARGIN};
use super::{Scenario, Split, WorldError, WorldMap};
use crate::geometry::Vec2;

const CONNECT_TOLERANCE: f64 = 1.0;
const TARGET_LENGTH: f64 = 150.0;
const MAX_LANES: usize = 12;

fn polyline_length(line: &[Vec2]) -> f64 {
    line.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Random walk over the lane graph (lane ends joined to lane starts within
/// 1 m). Checkpoints are the lane centerline vertices, so the route never
/// cuts across non-drivable ground, and both ends are pulled in from the
/// road's edge like the bundled routes.
pub fn generate_procedural_route(map: &WorldMap, seed: u64) -> Result<Scenario, WorldError> {
    let lanes = map.lane_centerlines();
    if lanes.is_empty() {
        return Err(WorldError::NoLanes(map.id().to_string()));
    }
    let successors: Vec<Vec<usize>> = lanes
        .iter()
        .map(|l| {
            let end = *l.last().unwrap();
            (0..lanes.len()).filter(|&j| lanes[j][0].dist(end) <= CONNECT_TOLERANCE).collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lane = rng.random_range(0..lanes.len());
    let mut points: Vec<Vec2> = Vec::new();
    let mut length = 0.0;
    for _ in 0..MAX_LANES {
        for &p in &lanes[lane] {
            if points.last().is_none_or(|q: &Vec2| q.dist(p) > 1e-9) {
                points.push(p);
            }
        }
        length += polyline_length(&lanes[lane]);
        let next = &successors[lane];
        if length >= TARGET_LENGTH || next.is_empty() {
            break;
        }
        lane = next[rng.random_range(0..next.len())];
    }
    if length <= 2.0 * END_MARGIN + 1.0 {
        return Err(WorldError::validation("procedural route", format!("only {length:.1} m of lanes reachable from seed {seed}")));
    }
    Ok(Scenario {
        name: format!("procedural-{}-{seed}", map.id()),
        map_id: map.id().to_string(),
        split: Split::Train,
        weather_pool: Vec::new(),
        checkpoints: trim(&points, END_MARGIN),
        map_path: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{bundled_maps, validate_reference, DEFAULT_VALIDATION_STEP};

    #[test]
    fn routes_stay_on_the_road() {
        for map in bundled_maps() {
            for seed in 0..20 {
                let sc = generate_procedural_route(&map, seed).unwrap();
                let path = sc.reference_path().unwrap();
                let bad = validate_reference(&path, &map, DEFAULT_VALIDATION_STEP);
                assert!(bad.is_empty(), "{} seed {seed}: {:?}", map.id(), bad.first());
            }
        }
    }

    #[test]
    fn same_seed_same_route() {
        let map = &bundled_maps()[0];
        let a = generate_procedural_route(map, 3).unwrap();
        let b = generate_procedural_route(map, 3).unwrap();
        assert_eq!(a.checkpoints, b.checkpoints);
    }
}

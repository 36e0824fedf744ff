//! Maps and scenarios shipped with the workbench. The JSON files under
//! `assets/` are generated from these builders and checked for drift in tests.

use super::{Command, Intersection, MapData, Marking, MarkingKind, Scenario, Split, WorldMap};
use crate::geometry::{offset_polyline, wrap_angle, Vec2};

/// Two-lane road width used by every bundled map.
pub const ROAD_WIDTH: f64 = 10.0;
const SAMPLE_STEP: f64 = 2.0;
const EDGE_INSET: f64 = 0.3;

/// Traces a road centerline out of straight and circular pieces.
#[derive(Debug, Clone)]
pub struct RoadBuilder {
    points: Vec<Vec2>,
    heading: f64,
}

impl RoadBuilder {
    pub fn new(start: Vec2, heading: f64) -> Self {
        RoadBuilder { points: vec![start], heading }
    }

    fn tip(&self) -> Vec2 {
        *self.points.last().unwrap()
    }

    pub fn straight(mut self, length: f64) -> Self {
        let n = (length / SAMPLE_STEP).ceil().max(1.0) as usize;
        let start = self.tip();
        let dir = Vec2::from_angle(self.heading);
        for k in 1..=n {
            self.points.push(start + dir * (length * k as f64 / n as f64));
        }
        self
    }

    /// Circular arc; positive `angle` turns left.
    pub fn arc(mut self, radius: f64, angle: f64) -> Self {
        let n = ((radius * angle.abs()) / SAMPLE_STEP).ceil().max(1.0) as usize;
        let side = angle.signum();
        let start = self.tip();
        let center = start + Vec2::from_angle(self.heading).perp() * (radius * side);
        let h0 = self.heading;
        for k in 1..=n {
            let h = h0 + angle * k as f64 / n as f64;
            self.points.push(center - Vec2::from_angle(h).perp() * (radius * side));
        }
        self.heading = wrap_angle(h0 + angle);
        self
    }

    pub fn build(self) -> Vec<Vec2> {
        self.points
    }
}

#[derive(Default)]
struct MapDraft {
    data: Option<MapData>,
    junctions: Vec<(Vec2, f64)>,
}

impl MapDraft {
    fn new(id: &str) -> Self {
        MapDraft {
            data: Some(MapData {
                id: id.to_string(),
                drivable_polygons: vec![],
                lane_centerlines: vec![],
                markings: vec![],
                obstacles: vec![],
                intersections: vec![],
            }),
            junctions: vec![],
        }
    }

    fn data(&mut self) -> &mut MapData {
        self.data.as_mut().unwrap()
    }

    /// Two-way road: one lane per direction, drive on the right.
    fn road(&mut self, center: &[Vec2], center_kind: MarkingKind) {
        let half = ROAD_WIDTH / 2.0;
        let left = offset_polyline(center, half);
        let right = offset_polyline(center, -half);
        let d = self.data();
        for i in 0..center.len() - 1 {
            d.drivable_polygons.push(vec![right[i], right[i + 1], left[i + 1], left[i]]);
        }
        d.lane_centerlines.push(offset_polyline(center, -half / 2.0));
        let mut back = offset_polyline(center, half / 2.0);
        back.reverse();
        d.lane_centerlines.push(back);
        d.markings.push(Marking { polyline: center.to_vec(), kind: center_kind });
        d.markings.push(Marking { polyline: offset_polyline(center, half - EDGE_INSET), kind: MarkingKind::Single });
        d.markings.push(Marking { polyline: offset_polyline(center, -(half - EDGE_INSET)), kind: MarkingKind::Single });
    }

    fn junction(&mut self, center: Vec2, branches: Vec<f64>) {
        let h = ROAD_WIDTH / 2.0;
        self.data().drivable_polygons.push(vec![
            center + Vec2::new(-h, -h),
            center + Vec2::new(h, -h),
            center + Vec2::new(h, h),
            center + Vec2::new(-h, h),
        ]);
        self.data().intersections.push(Intersection { point: center, branches });
        self.junctions.push((center, h));
    }

    fn obstacle_box(&mut self, center: Vec2, hx: f64, hy: f64) {
        self.data().obstacles.push(vec![
            center + Vec2::new(-hx, -hy),
            center + Vec2::new(hx, -hy),
            center + Vec2::new(hx, hy),
            center + Vec2::new(-hx, hy),
        ]);
    }

    /// Connects every lane ending at a junction edge to every lane starting
    /// there (except U-turns) with a quadratic Bezier inside the junction.
    fn finish(mut self) -> WorldMap {
        let junctions = std::mem::take(&mut self.junctions);
        let data = self.data();
        let lanes = data.lane_centerlines.clone();
        let near = |p: Vec2, c: Vec2, h: f64| (p.x - c.x).abs() <= h + 0.05 && (p.y - c.y).abs() <= h + 0.05;
        for (c, h) in junctions {
            let ins: Vec<&Vec<Vec2>> = lanes.iter().filter(|l| near(*l.last().unwrap(), c, h)).collect();
            let outs: Vec<&Vec<Vec2>> = lanes.iter().filter(|l| near(l[0], c, h)).collect();
            for a in &ins {
                let p0 = *a.last().unwrap();
                let din = (p0 - a[a.len() - 2]).normalized();
                for b in &outs {
                    let p2 = b[0];
                    let dout = (b[1] - p2).normalized();
                    if din.dot(dout) < -0.9 {
                        continue;
                    }
                    let denom = din.cross(dout);
                    let ctrl = if denom.abs() < 1e-9 { p0.lerp(p2, 0.5) } else { p0 + din * ((p2 - p0).cross(dout) / denom) };
                    let conn: Vec<Vec2> = (0..=10)
                        .map(|k| {
                            let t = k as f64 / 10.0;
                            p0 * ((1.0 - t) * (1.0 - t)) + ctrl * (2.0 * t * (1.0 - t)) + p2 * (t * t)
                        })
                        .collect();
                    data.lane_centerlines.push(conn);
                }
            }
        }
        WorldMap::new(self.data.take().unwrap()).expect("bundled maps are valid")
    }
}

fn straight_curve() -> WorldMap {
    let mut m = MapDraft::new("straight_curve");
    let c = RoadBuilder::new(Vec2::ZERO, 0.0)
        .straight(60.0)
        .arc(80.0, 35f64.to_radians())
        .straight(30.0)
        .arc(80.0, -35f64.to_radians())
        .straight(40.0)
        .build();
    m.road(&c, MarkingKind::Single);
    m.finish()
}

fn double_s() -> WorldMap {
    let mut m = MapDraft::new("double_s");
    let c = RoadBuilder::new(Vec2::new(0.0, 200.0), 0.0)
        .straight(30.0)
        .arc(60.0, -40f64.to_radians())
        .arc(60.0, 40f64.to_radians())
        .straight(40.0)
        .build();
    m.road(&c, MarkingKind::Double);
    m.finish()
}

fn holdout_town() -> WorldMap {
    let mut m = MapDraft::new("holdout_town");
    let c = RoadBuilder::new(Vec2::new(0.0, -300.0), 0.0)
        .straight(40.0)
        .arc(70.0, -35f64.to_radians())
        .straight(30.0)
        .arc(70.0, 45f64.to_radians())
        .straight(40.0)
        .build();
    m.road(&c, MarkingKind::Double);
    for (x, y) in [(15.0, -292.0), (30.0, -309.0), (150.0, -318.0), (185.0, -308.0)] {
        m.obstacle_box(Vec2::new(x, y), 2.0, 1.0);
    }
    m.finish()
}

fn junctions() -> WorldMap {
    let mut m = MapDraft::new("junctions");
    let h = ROAD_WIDTH / 2.0;
    let base = Vec2::new(0.0, 500.0);
    let main = [(-120.0, -h), (h, 100.0 - h), (100.0 + h, 220.0)];
    for (x0, x1) in main {
        let c = RoadBuilder::new(base + Vec2::new(x0, 0.0), 0.0).straight(x1 - x0).build();
        m.road(&c, MarkingKind::Single);
    }
    for jx in [0.0, 100.0] {
        let north = RoadBuilder::new(base + Vec2::new(jx, h), std::f64::consts::FRAC_PI_2).straight(80.0).build();
        m.road(&north, MarkingKind::Single);
        let south = RoadBuilder::new(base + Vec2::new(jx, -h), -std::f64::consts::FRAC_PI_2).straight(80.0).build();
        m.road(&south, MarkingKind::Single);
        m.junction(base + Vec2::new(jx, 0.0), vec![0.0, std::f64::consts::FRAC_PI_2, std::f64::consts::PI, -std::f64::consts::FRAC_PI_2]);
    }
    m.finish()
}

fn bend() -> WorldMap {
    let mut m = MapDraft::new("bend");
    let c = RoadBuilder::new(Vec2::new(0.0, -600.0), 0.0).straight(40.0).arc(15.0, std::f64::consts::FRAC_PI_2).straight(40.0).build();
    m.road(&c, MarkingKind::Single);
    m.finish()
}

/// Every bundled map.
pub fn bundled_maps() -> Vec<WorldMap> {
    vec![straight_curve(), double_s(), holdout_town(), junctions(), bend()]
}

pub fn bundled_map(id: &str) -> Option<WorldMap> {
    bundled_maps().into_iter().find(|m| m.id() == id)
}

/// Follows lanes from the lane starting nearest `start`, choosing the
/// connector matching each entry of `turns` at successive junctions.
pub(crate) fn chain_lanes(map: &WorldMap, start: Vec2, turns: &[Command]) -> Vec<Vec2> {
    let lanes = map.lane_centerlines();
    let mut lane = (0..lanes.len()).min_by(|&a, &b| lanes[a][0].dist(start).partial_cmp(&lanes[b][0].dist(start)).unwrap()).unwrap();
    let mut points: Vec<Vec2> = Vec::new();
    let mut turns = turns.iter();
    loop {
        for &p in &lanes[lane] {
            if points.last().is_none_or(|q| q.dist(p) > 1e-9) {
                points.push(p);
            }
        }
        let end = *lanes[lane].last().unwrap();
        let next: Vec<usize> = (0..lanes.len()).filter(|&j| lanes[j][0].dist(end) < 1e-6).collect();
        if next.is_empty() {
            break;
        }
        let choice = if next.len() == 1 {
            next[0]
        } else {
            let Some(turn) = turns.next() else { break };
            let h_in = (end - lanes[lane][lanes[lane].len() - 2]).angle();
            *next
                .iter()
                .find(|&&j| {
                    let l = &lanes[j];
                    let d = wrap_angle((l[l.len() - 1] - l[l.len() - 2]).angle() - h_in);
                    match turn {
                        Command::TurnLeft => d > 0.5,
                        Command::TurnRight => d < -0.5,
                        _ => d.abs() <= 0.5,
                    }
                })
                .expect("junction offers the requested turn")
        };
        lane = choice;
    }
    points
}

fn scenario(name: &str, map_id: &str, split: Split, pool: Vec<usize>, checkpoints: Vec<Vec2>) -> Scenario {
    Scenario { name: name.into(), map_id: map_id.into(), split, weather_pool: pool, checkpoints, map_path: None }
}

/// Room left at open road ends so the whole footprint starts and finishes
/// on the road.
pub(super) const END_MARGIN: f64 = 8.0;

fn lane(map: &WorldMap, i: usize) -> Vec<Vec2> {
    trim(&map.lane_centerlines()[i], END_MARGIN)
}

/// Cuts `margin` metres of arclength from both ends of a polyline.
pub(super) fn trim(line: &[Vec2], margin: f64) -> Vec<Vec2> {
    let cut_front = |line: &[Vec2]| -> Vec<Vec2> {
        let mut left = margin;
        for k in 0..line.len() - 1 {
            let seg = line[k].dist(line[k + 1]);
            if seg > left {
                let mut out = vec![line[k].lerp(line[k + 1], left / seg)];
                let rest = if seg - left < 1e-3 { &line[k + 2..] } else { &line[k + 1..] };
                out.extend_from_slice(rest);
                return out;
            }
            left -= seg;
        }
        panic!("polyline shorter than trim margin");
    };
    let mut rev = cut_front(line);
    rev.reverse();
    let mut out = cut_front(&rev);
    out.reverse();
    out
}

/// Weather presets reserved for training; the last preset is held out.
pub(crate) fn training_weather() -> Vec<usize> {
    (0..9).collect()
}

/// Every bundled scenario except the curb-bug fixtures.
pub fn bundled_scenarios() -> Vec<Scenario> {
    let sc = straight_curve();
    let ds = double_s();
    let ht = holdout_town();
    let jn = junctions();
    let east = lane(&sc, 0);
    let west = lane(&sc, 1);
    let half = east.len() / 2;
    vec![
        scenario("train_east", "straight_curve", Split::Train, training_weather(), east.clone()),
        scenario("train_west", "straight_curve", Split::Train, training_weather(), west.clone()),
        scenario("train_east_late", "straight_curve", Split::Train, training_weather(), east[half..].to_vec()),
        scenario("train_west_late", "straight_curve", Split::Train, training_weather(), west[half..].to_vec()),
        scenario("val_s_east", "double_s", Split::Validation, training_weather(), lane(&ds, 0)),
        scenario("val_s_west", "double_s", Split::Validation, training_weather(), lane(&ds, 1)),
        scenario("test_town_east", "holdout_town", Split::Test, vec![9], lane(&ht, 0)),
        scenario("test_town_west", "holdout_town", Split::Test, vec![9], lane(&ht, 1)),
        scenario(
            "junction_straight_left",
            "junctions",
            Split::Train,
            training_weather(),
            trim(&chain_lanes(&jn, Vec2::new(-120.0, 497.5), &[Command::GoStraight, Command::TurnLeft]), END_MARGIN),
        ),
        scenario(
            "junction_right",
            "junctions",
            Split::Train,
            training_weather(),
            trim(&chain_lanes(&jn, Vec2::new(-120.0, 497.5), &[Command::TurnRight]), END_MARGIN),
        ),
    ]
}

/// Bend map with two routes: sparse checkpoints whose connecting line cuts
/// across the inside of the bend, and the same route densified along the lane.
pub fn curb_bug_fixture() -> (WorldMap, Scenario, Scenario) {
    let map = bend();
    let dense = lane(&map, 0);
    let first = dense[0];
    let last = *dense.last().unwrap();
    let sparse = vec![first, first + Vec2::new(30.0, 0.0), Vec2::new(last.x, -575.0), last];
    (
        map,
        scenario("curb_bug_sparse", "bend", Split::Train, vec![0], sparse),
        scenario("curb_bug_dense", "bend", Split::Train, vec![0], dense),
    )
}

use serde::{Deserialize, Serialize};

use super::WorldError;
use crate::geometry::{point_in_polygon, segment_param, Aabb, Vec2};

/// Painted line kind. Double lines render as two strokes 0.3 m apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkingKind {
    Single,
    Double,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marking {
    pub polyline: Vec<Vec2>,
    pub kind: MarkingKind,
}

/// Annotated decision point where routes may branch. `branches` lists the
/// headings (radians) of the roads leaving the junction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub point: Vec2,
    #[serde(default)]
    pub branches: Vec<f64>,
}

/// Half-gap between the two strokes of a double marking.
pub const DOUBLE_MARKING_HALF_GAP: f64 = 0.15;

const INDEX_CELL: f64 = 5.0;
const LANE_CHECK_STEP: f64 = 0.5;

/// Serialized form of a map, shared by the file loader and [`WorldMap`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapData {
    pub id: String,
    pub drivable_polygons: Vec<Vec<Vec2>>,
    pub lane_centerlines: Vec<Vec<Vec2>>,
    #[serde(default)]
    pub markings: Vec<Marking>,
    #[serde(default)]
    pub obstacles: Vec<Vec<Vec2>>,
    #[serde(default)]
    pub intersections: Vec<Intersection>,
}

/// `x.floor() as i64` without the libm call (saturating like `as`).
fn floor_i64(x: f64) -> i64 {
    let i = x as i64;
    if (i as f64) > x {
        i - 1
    } else {
        i
    }
}

/// Dense uniform grid over the boxes' extent; each bucket lists the items
/// whose boxes touch it.
#[derive(Debug, Clone, Default)]
struct GridIndex {
    origin: (i64, i64),
    nx: i64,
    ny: i64,
    buckets: Vec<Vec<usize>>,
}

impl GridIndex {
    fn key(p: Vec2) -> (i64, i64) {
        (floor_i64(p.x / INDEX_CELL), floor_i64(p.y / INDEX_CELL))
    }

    fn build(boxes: &[Aabb]) -> Self {
        if boxes.is_empty() {
            return GridIndex::default();
        }
        let (mut lo, mut hi) = ((i64::MAX, i64::MAX), (i64::MIN, i64::MIN));
        for b in boxes {
            let (k0, k1) = (Self::key(b.min), Self::key(b.max));
            lo = (lo.0.min(k0.0), lo.1.min(k0.1));
            hi = (hi.0.max(k1.0), hi.1.max(k1.1));
        }
        let (nx, ny) = (hi.0 - lo.0 + 1, hi.1 - lo.1 + 1);
        let mut index = GridIndex { origin: lo, nx, ny, buckets: vec![Vec::new(); (nx * ny) as usize] };
        for (item, b) in boxes.iter().enumerate() {
            let ((x0, y0), (x1, y1)) = (Self::key(b.min), Self::key(b.max));
            for gx in x0..=x1 {
                for gy in y0..=y1 {
                    let i = index.slot((gx, gy)).expect("inside extent");
                    index.buckets[i].push(item);
                }
            }
        }
        index
    }

    fn slot(&self, (gx, gy): (i64, i64)) -> Option<usize> {
        let (x, y) = (gx - self.origin.0, gy - self.origin.1);
        (x >= 0 && y >= 0 && x < self.nx && y < self.ny).then(|| (y * self.nx + x) as usize)
    }

    fn query(&self, p: Vec2) -> &[usize] {
        self.slot(Self::key(p)).map(|i| self.buckets[i].as_slice()).unwrap_or(&[])
    }

    fn query_box(&self, bbox: &Aabb, out: &mut Vec<usize>) {
        out.clear();
        if self.buckets.is_empty() {
            return;
        }
        let (x0, y0) = Self::key(bbox.min);
        let (x1, y1) = Self::key(bbox.max);
        let (x0, x1) = (x0.max(self.origin.0), x1.min(self.origin.0 + self.nx - 1));
        let (y0, y1) = (y0.max(self.origin.1), y1.min(self.origin.1 + self.ny - 1));
        for gx in x0..=x1 {
            for gy in y0..=y1 {
                if let Some(i) = self.slot((gx, gy)) {
                    out.extend_from_slice(&self.buckets[i]);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
    }
}

/// Static 2D world. Drivable space is the union of the drivable polygons
/// minus the obstacle polygons. Immutable once built.
#[derive(Debug, Clone)]
pub struct WorldMap {
    data: MapData,
    drivable_boxes: Vec<Aabb>,
    obstacle_boxes: Vec<Aabb>,
    drivable_index: GridIndex,
    obstacle_index: GridIndex,
    stroke_index: GridIndex,
    strokes: Vec<(Vec2, Vec2)>,
    bounds: Aabb,
}

impl PartialEq for WorldMap {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}

impl WorldMap {
    /// Validates invariants and builds the spatial indices.
    pub fn new(data: MapData) -> Result<Self, WorldError> {
        for (i, poly) in data.drivable_polygons.iter().chain(data.obstacles.iter()).enumerate() {
            if poly.len() < 3 {
                return Err(WorldError::validation("drivable_polygons/obstacles", format!("polygon {i} has fewer than 3 vertices")));
            }
            if poly.iter().any(|p| !p.is_finite()) {
                return Err(WorldError::validation("drivable_polygons/obstacles", format!("polygon {i} has non-finite vertex")));
            }
        }
        for (i, m) in data.markings.iter().enumerate() {
            if m.polyline.len() < 2 {
                return Err(WorldError::validation("markings", format!("marking {i} has fewer than 2 points")));
            }
        }
        let drivable_boxes: Vec<Aabb> = data.drivable_polygons.iter().map(|p| Aabb::from_points(p.as_slice())).collect();
        let obstacle_boxes: Vec<Aabb> = data.obstacles.iter().map(|p| Aabb::from_points(p.as_slice())).collect();
        let drivable_index = GridIndex::build(&drivable_boxes);
        let obstacle_index = GridIndex::build(&obstacle_boxes);
        let strokes = expand_strokes(&data.markings);
        let stroke_boxes: Vec<Aabb> = strokes.iter().map(|(a, b)| Aabb::from_points([a, b])).collect();
        let stroke_index = GridIndex::build(&stroke_boxes);
        let mut bounds = Aabb::empty();
        for b in drivable_boxes.iter().chain(obstacle_boxes.iter()) {
            bounds.include(b.min);
            bounds.include(b.max);
        }
        let map = WorldMap { data, drivable_boxes, obstacle_boxes, drivable_index, obstacle_index, stroke_index, strokes, bounds };
        for (i, lane) in map.data.lane_centerlines.iter().enumerate() {
            if lane.len() < 2 {
                return Err(WorldError::validation("lane_centerlines", format!("lane {i} has fewer than 2 points")));
            }
            if let Some(p) = sample_polyline(lane, LANE_CHECK_STEP).into_iter().find(|p| !map.lane_point_ok(*p)) {
                return Err(WorldError::validation(
                    "lane_centerlines",
                    format!("lane {i} leaves the drivable area at ({:.3}, {:.3})", p.x, p.y),
                ));
            }
        }
        Ok(map)
    }

    /// Drivable, or on a drivable boundary (lane ends may sit on an edge).
    fn lane_point_ok(&self, p: Vec2) -> bool {
        if self.is_drivable(p) {
            return true;
        }
        !self.in_obstacle(p)
            && self.data.drivable_polygons.iter().any(|poly| {
                (0..poly.len()).any(|k| {
                    let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
                    a.lerp(b, segment_param(p, a, b)).dist(p) < 1e-6
                })
            })
    }

    pub fn data(&self) -> &MapData {
        &self.data
    }

    pub fn id(&self) -> &str {
        &self.data.id
    }

    pub fn drivable_polygons(&self) -> &[Vec<Vec2>] {
        &self.data.drivable_polygons
    }

    pub fn lane_centerlines(&self) -> &[Vec<Vec2>] {
        &self.data.lane_centerlines
    }

    pub fn markings(&self) -> &[Marking] {
        &self.data.markings
    }

    pub fn obstacles(&self) -> &[Vec<Vec2>] {
        &self.data.obstacles
    }

    pub fn intersections(&self) -> &[Intersection] {
        &self.data.intersections
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    /// Rendered marking strokes (double markings already split in two).
    pub fn strokes(&self) -> &[(Vec2, Vec2)] {
        &self.strokes
    }

    pub fn in_drivable_polygon(&self, p: Vec2) -> bool {
        self.drivable_index
            .query(p)
            .iter()
            .any(|&i| self.drivable_boxes[i].contains(p) && point_in_polygon(p, &self.data.drivable_polygons[i]))
    }

    pub fn in_obstacle(&self, p: Vec2) -> bool {
        self.obstacle_index.query(p).iter().any(|&i| self.obstacle_boxes[i].contains(p) && point_in_polygon(p, &self.data.obstacles[i]))
    }

    pub fn is_drivable(&self, p: Vec2) -> bool {
        self.in_drivable_polygon(p) && !self.in_obstacle(p)
    }

    /// Stroke indices whose bounding boxes touch `bbox`.
    pub fn strokes_near(&self, bbox: &Aabb, out: &mut Vec<usize>) {
        self.stroke_index.query_box(bbox, out);
    }

    /// Drivable and obstacle polygons whose bounding boxes touch `bbox`,
    /// returned as (drivable indices, obstacle indices).
    pub fn polygons_near(&self, bbox: &Aabb) -> (Vec<usize>, Vec<usize>) {
        let mut d = Vec::new();
        let mut o = Vec::new();
        self.drivable_index.query_box(bbox, &mut d);
        self.obstacle_index.query_box(bbox, &mut o);
        d.retain(|&i| self.drivable_boxes[i].intersects(bbox));
        o.retain(|&i| self.obstacle_boxes[i].intersects(bbox));
        (d, o)
    }
}

fn expand_strokes(markings: &[Marking]) -> Vec<(Vec2, Vec2)> {
    let mut out = Vec::new();
    for m in markings {
        let lines = match m.kind {
            MarkingKind::Single => vec![m.polyline.clone()],
            MarkingKind::Double => vec![
                crate::geometry::offset_polyline(&m.polyline, DOUBLE_MARKING_HALF_GAP),
                crate::geometry::offset_polyline(&m.polyline, -DOUBLE_MARKING_HALF_GAP),
            ],
        };
        for l in lines {
            out.extend(l.windows(2).map(|w| (w[0], w[1])));
        }
    }
    out
}

/// Points every `step` meters along a polyline, including both endpoints.
pub fn sample_polyline(line: &[Vec2], step: f64) -> Vec<Vec2> {
    let mut out = Vec::new();
    if line.is_empty() {
        return out;
    }
    out.push(line[0]);
    let mut carry = 0.0;
    for w in line.windows(2) {
        let len = w[0].dist(w[1]);
        let mut s = step - carry;
        while s < len {
            out.push(w[0].lerp(w[1], s / len));
            s += step;
        }
        carry = len - (s - step);
    }
    out.push(*line.last().unwrap());
    out
}

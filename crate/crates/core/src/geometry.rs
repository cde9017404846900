//! Geometric predicates and counting oracles.
//!
//! Every ground-truth answer in the benchmark is computed here, from the same
//! primitives the generators place in a scene. All arithmetic is `f64`; the
//! generators keep layouts far enough from decision boundaries that no
//! predicate needs exact arithmetic.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for merging intersection points found by different segment pairs.
pub const DEDUP_TOLERANCE: f64 = 1e-9;

// Relative slack on parametric coordinates so that touching at an endpoint
// survives round-off.
const PARAM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("coordinate is not finite")]
    NonFinite,
    #[error("segment endpoints coincide at ({x}, {y})")]
    ZeroLengthSegment { x: f64, y: f64 },
    #[error("polyline needs at least 2 points, got {0}")]
    PolylineTooShort(usize),
    #[error("polyline x-coordinates must strictly increase (violated at point {0})")]
    NotFunctionGraph(usize),
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("half size must be positive, got {0}")]
    NonPositiveHalfSize(f64),
    #[error("rotation {0} outside [0, pi/2)")]
    RotationOutOfRange(f64),
    #[error("invalid station graph: {0}")]
    InvalidStationGraph(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    // sqrt is correctly rounded everywhere; hypot is not, and generated
    // layouts must be identical across platforms.
    pub fn distance(&self, other: &Point) -> f64 {
        let (dx, dy) = self.sub(other);
        (dx * dx + dy * dy).sqrt()
    }

    fn sub(&self, other: &Point) -> (f64, f64) {
        (self.x - other.x, self.y - other.y)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

fn check_finite(p: &Point) -> Result<(), GeometryError> {
    if p.is_finite() {
        Ok(())
    } else {
        Err(GeometryError::NonFinite)
    }
}

fn cross(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    a: Point,
    b: Point,
}

impl Segment {
    pub fn new(a: Point, b: Point) -> Result<Self, GeometryError> {
        check_finite(&a)?;
        check_finite(&b)?;
        if a == b {
            return Err(GeometryError::ZeroLengthSegment { x: a.x, y: a.y });
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> Point {
        self.a
    }

    pub fn b(&self) -> Point {
        self.b
    }

    pub fn length(&self) -> f64 {
        self.a.distance(&self.b)
    }

    pub fn point_at(&self, t: f64) -> Point {
        Point::new(
            self.a.x + t * (self.b.x - self.a.x),
            self.a.y + t * (self.b.y - self.a.y),
        )
    }

    /// Euclidean distance from `p` to the closest point of the segment.
    pub fn distance_to_point(&self, p: &Point) -> f64 {
        let d = self.b.sub(&self.a);
        let len2 = d.0 * d.0 + d.1 * d.1;
        let w = p.sub(&self.a);
        let t = ((w.0 * d.0 + w.1 * d.1) / len2).clamp(0.0, 1.0);
        self.point_at(t).distance(p)
    }

    /// Minimum distance between two segments (zero when they meet).
    pub fn distance_to_segment(&self, other: &Segment) -> f64 {
        if !matches!(classify_segments(self, other), SegmentRelation::Disjoint) {
            return 0.0;
        }
        [
            self.distance_to_point(&other.a),
            self.distance_to_point(&other.b),
            other.distance_to_point(&self.a),
            other.distance_to_point(&self.b),
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }
}

/// How two segments meet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentRelation {
    Disjoint,
    Point(Point),
    /// Collinear segments sharing more than one point. Generators never emit this.
    CollinearOverlap,
}

pub fn classify_segments(s1: &Segment, s2: &Segment) -> SegmentRelation {
    let r = s1.b.sub(&s1.a);
    let s = s2.b.sub(&s2.a);
    let qp = s2.a.sub(&s1.a);
    let denom = cross(r, s);
    let scale = (r.0.abs() + r.1.abs()) * (s.0.abs() + s.1.abs());

    if denom.abs() <= PARAM_EPS * scale {
        // Parallel. Collinear only if s2.a lies on the carrier line of s1.
        let r_len2 = r.0 * r.0 + r.1 * r.1;
        let off = cross(qp, r);
        if off.abs() > PARAM_EPS * (r_len2 * (qp.0 * qp.0 + qp.1 * qp.1)).sqrt() {
            return SegmentRelation::Disjoint;
        }
        let t0 = (qp.0 * r.0 + qp.1 * r.1) / r_len2;
        let t1 = t0 + (s.0 * r.0 + s.1 * r.1) / r_len2;
        let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        let start = lo.max(0.0);
        let end = hi.min(1.0);
        if end < start - PARAM_EPS {
            SegmentRelation::Disjoint
        } else if (end - start).abs() <= PARAM_EPS {
            SegmentRelation::Point(s1.point_at(start.clamp(0.0, 1.0)))
        } else {
            SegmentRelation::CollinearOverlap
        }
    } else {
        let t = cross(qp, s) / denom;
        let u = cross(qp, r) / denom;
        let range = -PARAM_EPS..=1.0 + PARAM_EPS;
        if range.contains(&t) && range.contains(&u) {
            SegmentRelation::Point(s1.point_at(t.clamp(0.0, 1.0)))
        } else {
            SegmentRelation::Disjoint
        }
    }
}

/// Unique meeting point of two segments; `None` when disjoint or collinear-overlapping.
pub fn segment_intersection(s1: &Segment, s2: &Segment) -> Option<Point> {
    match classify_segments(s1, s2) {
        SegmentRelation::Point(p) => Some(p),
        SegmentRelation::Disjoint | SegmentRelation::CollinearOverlap => None,
    }
}

/// Piecewise-linear function graph: x strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    points: Vec<Point>,
}

impl Polyline {
    pub fn new(points: Vec<Point>) -> Result<Self, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::PolylineTooShort(points.len()));
        }
        for p in &points {
            check_finite(p)?;
        }
        for (i, w) in points.windows(2).enumerate() {
            if w[1].x <= w[0].x {
                return Err(GeometryError::NotFunctionGraph(i + 1));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        self.points.windows(2).map(|w| Segment { a: w[0], b: w[1] })
    }
}

/// Distinct intersection points between two polylines, merged within [`DEDUP_TOLERANCE`].
pub fn polyline_intersection_points(p1: &Polyline, p2: &Polyline) -> Vec<Point> {
    let mut found: Vec<Point> = Vec::new();
    for s1 in p1.segments() {
        for s2 in p2.segments() {
            if let Some(p) = segment_intersection(&s1, &s2) {
                if !found.iter().any(|q| q.distance(&p) <= DEDUP_TOLERANCE) {
                    found.push(p);
                }
            }
        }
    }
    found
}

pub fn count_polyline_intersections(p1: &Polyline, p2: &Polyline) -> usize {
    polyline_intersection_points(p1, p2).len()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    center: Point,
    radius: f64,
}

impl Circle {
    pub fn new(center: Point, radius: f64) -> Result<Self, GeometryError> {
        check_finite(&center)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeometryError::NonPositiveRadius(radius));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// Closed-interval test `|r1 - r2| <= d <= r1 + r2`; tangency counts as intersecting.
pub fn circles_intersect(c1: &Circle, c2: &Circle) -> bool {
    let (dx, dy) = c1.center.sub(&c2.center);
    let d2 = dx * dx + dy * dy;
    let sum = c1.radius + c2.radius;
    let diff = c1.radius - c2.radius;
    diff * diff <= d2 && d2 <= sum * sum
}

/// Number of unordered intersecting pairs.
pub fn ring_overlap_count(circles: &[Circle]) -> usize {
    let mut n = 0;
    for (i, a) in circles.iter().enumerate() {
        for b in &circles[i + 1..] {
            if circles_intersect(a, b) {
                n += 1;
            }
        }
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Square {
    center: Point,
    half_size: f64,
    rotation: f64,
}

impl Square {
    pub fn new(center: Point, half_size: f64, rotation: f64) -> Result<Self, GeometryError> {
        check_finite(&center)?;
        if !(half_size > 0.0 && half_size.is_finite()) {
            return Err(GeometryError::NonPositiveHalfSize(half_size));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&rotation) {
            return Err(GeometryError::RotationOutOfRange(rotation));
        }
        Ok(Self {
            center,
            half_size,
            rotation,
        })
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn half_size(&self) -> f64 {
        self.half_size
    }

    pub fn rotation(&self) -> f64 {
        self.rotation
    }

    /// Corners in counter-clockwise order starting from local (+h, +h).
    pub fn corners(&self) -> [Point; 4] {
        let (sin, cos) = self.rotation.sin_cos();
        let h = self.half_size;
        [(h, h), (-h, h), (-h, -h), (h, -h)].map(|(lx, ly)| {
            Point::new(
                self.center.x + lx * cos - ly * sin,
                self.center.y + lx * sin + ly * cos,
            )
        })
    }

    /// Distance from an interior point to the boundary; negative outside.
    pub fn inner_margin(&self, p: &Point) -> f64 {
        let (sin, cos) = self.rotation.sin_cos();
        let (dx, dy) = p.sub(&self.center);
        let lx = dx * cos + dy * sin;
        let ly = -dx * sin + dy * cos;
        self.half_size - lx.abs().max(ly.abs())
    }
}

/// Each square, largest first, has all four corners inside its predecessor
/// with at least `clearance` to spare.
pub fn squares_strictly_nested(squares: &[Square], clearance: f64) -> bool {
    if squares.len() < 2 {
        return false;
    }
    let mut sorted: Vec<&Square> = squares.iter().collect();
    sorted.sort_by(|a, b| b.half_size.total_cmp(&a.half_size));
    sorted.windows(2).all(|w| {
        let (outer, inner) = (w[0], w[1]);
        inner.half_size < outer.half_size
            && inner
                .corners()
                .iter()
                .all(|c| outer.inner_margin(c) >= clearance)
    })
}

/// Grid vertex of a station map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridNode {
    pub col: u32,
    pub row: u32,
}

impl GridNode {
    pub const fn new(col: u32, row: u32) -> Self {
        Self { col, row }
    }

    fn is_adjacent(&self, other: &GridNode) -> bool {
        self.col.abs_diff(other.col) + self.row.abs_diff(other.row) == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitPath {
    pub color: [u8; 3],
    pub nodes: Vec<GridNode>,
}

impl TransitPath {
    pub fn endpoints(&self) -> Option<(GridNode, GridNode)> {
        Some((*self.nodes.first()?, *self.nodes.last()?))
    }

    /// Undirected unit edges walked by this path, normalized so the smaller node comes first.
    pub fn edges(&self) -> impl Iterator<Item = (GridNode, GridNode)> + '_ {
        self.nodes.windows(2).map(|w| {
            if w[0] <= w[1] {
                (w[0], w[1])
            } else {
                (w[1], w[0])
            }
        })
    }
}

/// Subway map on a `cols x rows` lattice where every unit edge exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationGraph {
    cols: u32,
    rows: u32,
    stations: BTreeMap<char, GridNode>,
    paths: Vec<TransitPath>,
    terminals: (char, char),
}

impl StationGraph {
    pub fn new(
        cols: u32,
        rows: u32,
        stations: BTreeMap<char, GridNode>,
        paths: Vec<TransitPath>,
        terminals: (char, char),
    ) -> Result<Self, GeometryError> {
        let invalid = |msg: String| Err(GeometryError::InvalidStationGraph(msg));
        let in_grid = |n: &GridNode| n.col < cols && n.row < rows;
        for (label, node) in &stations {
            if !in_grid(node) {
                return invalid(format!("station {label} lies outside the grid"));
            }
        }
        for t in [terminals.0, terminals.1] {
            if !stations.contains_key(&t) {
                return invalid(format!("terminal {t} is not a labeled station"));
            }
        }
        for (i, path) in paths.iter().enumerate() {
            if path.nodes.len() < 2 {
                return invalid(format!("path {i} has fewer than 2 nodes"));
            }
            if let Some(n) = path.nodes.iter().find(|n| !in_grid(n)) {
                return invalid(format!("path {i} visits off-grid node {n:?}"));
            }
            if path.nodes.windows(2).any(|w| !w[0].is_adjacent(&w[1])) {
                return invalid(format!("path {i} steps along a non-edge"));
            }
            if paths[..i].iter().any(|p| p.color == path.color) {
                return invalid(format!("path {i} reuses color {:?}", path.color));
            }
        }
        Ok(Self {
            cols,
            rows,
            stations,
            paths,
            terminals,
        })
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn stations(&self) -> &BTreeMap<char, GridNode> {
        &self.stations
    }

    pub fn paths(&self) -> &[TransitPath] {
        &self.paths
    }

    pub fn terminals(&self) -> (char, char) {
        self.terminals
    }

    pub fn station(&self, label: char) -> Option<GridNode> {
        self.stations.get(&label).copied()
    }
}

/// Number of paths whose two ends sit on the query terminals, in either order.
pub fn count_terminal_paths(g: &StationGraph) -> usize {
    let (Some(a), Some(b)) = (g.station(g.terminals.0), g.station(g.terminals.1)) else {
        return 0;
    };
    g.paths
        .iter()
        .filter_map(TransitPath::endpoints)
        .filter(|&(s, e)| (s == a && e == b) || (s == b && e == a))
        .count()
}

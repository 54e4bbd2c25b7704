//! Planar geometry in image pixel coordinates.
//!
//! The frame has its origin at the top-left corner, x growing rightwards and
//! y growing downwards. "Counter-clockwise" below always means a positive
//! shoelace signed area, regardless of the visual orientation on screen.
//!
//! Everything here is a pure function over immutable values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(&'static str),
    #[error("self-intersecting polygon")]
    SelfIntersecting,
    #[error("invalid box [{0}, {1}, {2}, {3}]")]
    InvalidBox(f64, f64, f64, f64),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("shape is not convex")]
    NotConvex,
    #[error("raster dimensions must be at least 1x1, got {0}x{1}")]
    EmptyRaster(u32, u32),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

/// Horizontal (axis-aligned) bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Hbb {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl Hbb {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let ok =
            [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite() && *v >= 0.0) && x_min <= x_max && y_min <= y_max;
        if !ok {
            return Err(GeometryError::InvalidBox(x_min, y_min, x_max, y_max));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Corners in counter-clockwise order starting at (x_min, y_min).
    pub fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.x_min, self.y_min),
            Point::new(self.x_max, self.y_min),
            Point::new(self.x_max, self.y_max),
            Point::new(self.x_min, self.y_max),
        ]
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Axis-aligned box around an arbitrary non-empty point set.
    pub fn enclosing(points: &[Point]) -> Result<Self> {
        if points.is_empty() {
            return Err(GeometryError::DegeneratePolygon("no vertices"));
        }
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for p in points {
            b[0] = b[0].min(p.x);
            b[1] = b[1].min(p.y);
            b[2] = b[2].max(p.x);
            b[3] = b[3].max(p.y);
        }
        Hbb::new(b[0], b[1], b[2], b[3])
    }
}

impl TryFrom<[f64; 4]> for Hbb {
    type Error = GeometryError;
    fn try_from(v: [f64; 4]) -> Result<Self> {
        Hbb::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Hbb> for [f64; 4] {
    fn from(b: Hbb) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

/// Oriented quadrilateral, four vertices with counter-clockwise winding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[Point; 4]", into = "[Point; 4]")]
pub struct Quad([Point; 4]);

impl Quad {
    /// Validates the quad and normalizes its winding, keeping the first
    /// vertex in place.
    pub fn new(vertices: [Point; 4]) -> Result<Self> {
        let normalized = validate_ring(&vertices)?;
        let mut out = [Point::default(); 4];
        out.copy_from_slice(&normalized);
        Ok(Quad(out))
    }

    pub fn vertices(&self) -> &[Point; 4] {
        &self.0
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.0)
    }

    pub fn is_convex(&self) -> bool {
        is_convex_ccw(&self.0)
    }
}

impl TryFrom<[Point; 4]> for Quad {
    type Error = GeometryError;
    fn try_from(v: [Point; 4]) -> Result<Self> {
        Quad::new(v)
    }
}

impl From<Quad> for [Point; 4] {
    fn from(q: Quad) -> Self {
        q.0
    }
}

/// Simple polygon with at least three vertices and counter-clockwise winding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Polygon(Vec<Point>);

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        validate_ring(&vertices).map(Polygon)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_convex(&self) -> bool {
        is_convex_ccw(&self.0)
    }

    pub fn into_vertices(self) -> Vec<Point> {
        self.0
    }
}

impl TryFrom<Vec<Point>> for Polygon {
    type Error = GeometryError;
    fn try_from(v: Vec<Point>) -> Result<Self> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<Point> {
    fn from(p: Polygon) -> Self {
        p.0
    }
}

impl From<Quad> for Polygon {
    fn from(q: Quad) -> Self {
        Polygon(q.0.to_vec())
    }
}

impl From<Hbb> for Polygon {
    fn from(b: Hbb) -> Self {
        Polygon(b.corners().to_vec())
    }
}

/// Any region shape carried by annotations and predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Hbb(Hbb),
    Quad(Quad),
    #[serde(rename = "poly")]
    Polygon(Polygon),
}

impl Geometry {
    pub fn vertices(&self) -> Vec<Point> {
        match self {
            Geometry::Hbb(b) => b.corners().to_vec(),
            Geometry::Quad(q) => q.vertices().to_vec(),
            Geometry::Polygon(p) => p.vertices().to_vec(),
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Geometry::Hbb(b) => b.area(),
            Geometry::Quad(q) => q.area(),
            Geometry::Polygon(p) => polygon_area(p),
        }
    }

    pub fn bounds(&self) -> Hbb {
        match self {
            Geometry::Hbb(b) => *b,
            // Vertices are validated finite; a box around them cannot fail
            // unless coordinates are negative, which clamps to zero here.
            _ => {
                let v = self.vertices();
                let mut b = [f64::INFINITY, f64::INFINITY, 0.0f64, 0.0f64];
                for p in &v {
                    b[0] = b[0].min(p.x.max(0.0));
                    b[1] = b[1].min(p.y.max(0.0));
                    b[2] = b[2].max(p.x.max(0.0));
                    b[3] = b[3].max(p.y.max(0.0));
                }
                Hbb {
                    x_min: b[0],
                    y_min: b[1],
                    x_max: b[2],
                    y_max: b[3],
                }
            }
        }
    }

    /// True when every vertex lies in `[0, width] x [0, height]`.
    pub fn within(&self, width: f64, height: f64) -> bool {
        self.vertices()
            .iter()
            .all(|p| p.x >= 0.0 && p.y >= 0.0 && p.x <= width && p.y <= height)
    }

    /// Clamps every vertex into `[0, width] x [0, height]`. Clamping can make
    /// a quad or polygon degenerate, hence the `Result`.
    pub fn clamped(&self, width: f64, height: f64) -> Result<Geometry> {
        let c = |p: &Point| Point::new(p.x.clamp(0.0, width), p.y.clamp(0.0, height));
        Ok(match self {
            Geometry::Hbb(b) => {
                let [a, _, d, _] = b.corners();
                let (a, d) = (c(&a), c(&d));
                Geometry::Hbb(Hbb::new(a.x, a.y, d.x, d.y)?)
            }
            Geometry::Quad(q) => {
                let v = q.vertices();
                Geometry::Quad(Quad::new([c(&v[0]), c(&v[1]), c(&v[2]), c(&v[3])])?)
            }
            Geometry::Polygon(p) => Geometry::Polygon(Polygon::new(p.vertices().iter().map(c).collect())?),
        })
    }

    pub fn to_polygon(&self) -> Polygon {
        match self {
            Geometry::Hbb(b) => Polygon::from(*b),
            Geometry::Quad(q) => Polygon::from(*q),
            Geometry::Polygon(p) => p.clone(),
        }
    }
}

/// Shoelace signed area; positive for counter-clockwise rings.
pub fn signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    acc * 0.5
}

pub fn polygon_area(p: &Polygon) -> f64 {
    signed_area(p.vertices()).abs()
}

fn validate_ring(vertices: &[Point]) -> Result<Vec<Point>> {
    if vertices.iter().any(|p| !p.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    if vertices.len() < 3 {
        return Err(GeometryError::DegeneratePolygon("fewer than 3 vertices"));
    }
    let n = vertices.len();
    for i in 0..n {
        if vertices[i] == vertices[(i + 1) % n] {
            return Err(GeometryError::DegeneratePolygon("repeated consecutive vertex"));
        }
    }
    let area = signed_area(vertices);
    if area.abs() <= EPS {
        return Err(GeometryError::DegeneratePolygon("zero area"));
    }
    if !is_simple(vertices) {
        return Err(GeometryError::SelfIntersecting);
    }
    let mut out = vertices.to_vec();
    if area < 0.0 {
        out[1..].reverse();
    }
    Ok(out)
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    b.sub(a).cross(c.sub(a))
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// O(n^2) simplicity test: non-adjacent edges must not touch, adjacent edges
/// must not fold back over each other.
fn is_simple(ring: &[Point]) -> bool {
    let n = ring.len();
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        let c = ring[(i + 2) % n];
        // adjacent edges a-b, b-c overlap when collinear and c folds back
        if orient(a, b, c) == 0.0 && b.sub(a).dot(c.sub(b)) < 0.0 {
            return false;
        }
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_intersect(a, b, ring[j], ring[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

fn is_convex_ccw(ring: &[Point]) -> bool {
    let n = ring.len();
    (0..n).all(|i| orient(ring[i], ring[(i + 1) % n], ring[(i + 2) % n]) >= -EPS)
}

/// Andrew's monotone chain. Returns the hull counter-clockwise without
/// collinear points; fewer than 3 points means the input was degenerate.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Axis-aligned enclosing rectangle of a polygon.
pub fn aabb_of(p: &Polygon) -> Hbb {
    // a validated polygon has finite vertices; negative coordinates clamp to 0
    Geometry::Polygon(p.clone()).bounds()
}

/// Minimum-area enclosing rectangle via rotating calipers over the convex
/// hull. One side of the result is collinear with a hull edge.
pub fn min_area_rect(p: &Polygon) -> Result<Quad> {
    min_area_rect_of_points(p.vertices())
}

pub fn min_area_rect_of_points(points: &[Point]) -> Result<Quad> {
    let hull = convex_hull(points);
    let n = hull.len();
    if n < 3 {
        return Err(GeometryError::DegeneratePolygon("collinear points"));
    }
    let proj = |idx: usize, origin: Point, axis: Point| hull[idx % n].sub(origin).dot(axis);

    // Extreme vertices along +u, +normal and -u move monotonically forward
    // as the caliper edge rotates counter-clockwise.
    let advance = |mut idx: usize, origin: Point, axis: Point, sign: f64| {
        let mut steps = 0;
        while steps < n && sign * proj(idx + 1, origin, axis) > sign * proj(idx, origin, axis) {
            idx += 1;
            steps += 1;
        }
        idx
    };
    let mut best: Option<(f64, [Point; 4])> = None;
    let (mut right, mut top, mut left) = (1usize, 1usize, 1usize);
    for i in 0..n {
        let p = hull[i];
        let q = hull[(i + 1) % n];
        let e = q.sub(p);
        let len = e.dot(e).sqrt();
        let u = Point::new(e.x / len, e.y / len);
        let normal = Point::new(-u.y, u.x);

        right = advance(right.max(i + 1), p, u, 1.0);
        if i == 0 {
            top = right;
        }
        top = advance(top, p, normal, 1.0);
        if i == 0 {
            left = top;
        }
        left = advance(left, p, u, -1.0);

        let max_u = proj(right, p, u);
        let min_u = proj(left, p, u).min(0.0);
        let h = proj(top, p, normal);
        let area = (max_u - min_u) * h;
        if best.as_ref().is_none_or(|(a, _)| area < *a) {
            let at = |s: f64, t: f64| Point::new(p.x + u.x * s + normal.x * t, p.y + u.y * s + normal.y * t);
            best = Some((area, [at(min_u, 0.0), at(max_u, 0.0), at(max_u, h), at(min_u, h)]));
        }
    }
    let (_, corners) = best.expect("hull has at least three edges");
    Quad::new(corners)
}

pub fn iou_hbb(a: &Hbb, b: &Hbb) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 || inter <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Sutherland-Hodgman clip of `subject` against the convex CCW `clip` ring.
pub fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % m];
        let input = std::mem::take(&mut output);
        let k = input.len();
        for j in 0..k {
            let cur = input[j];
            let prev = input[(j + k - 1) % k];
            let cur_in = orient(a, b, cur) >= 0.0;
            let prev_in = orient(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

fn line_intersection(p: Point, q: Point, a: Point, b: Point) -> Point {
    let r = q.sub(p);
    let s = b.sub(a);
    let denom = r.cross(s);
    if denom.abs() < EPS {
        return q;
    }
    let t = a.sub(p).cross(s) / denom;
    Point::new(p.x + t * r.x, p.y + t * r.y)
}

/// IoU of two convex rings (any winding) by clipping plus inclusion-exclusion.
pub fn iou_convex(a: &[Point], b: &[Point]) -> Result<f64> {
    let a = convex_ring(a)?;
    let b = convex_ring(b)?;
    let area_a = signed_area(&a);
    let area_b = signed_area(&b);
    let inter = signed_area(&clip_convex(&a, &b)).max(0.0);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        return Ok(0.0);
    }
    Ok((inter / union).clamp(0.0, 1.0))
}

/// Like [`iou_convex`], but replaces each input by its convex hull first.
pub fn iou_convex_hull(a: &[Point], b: &[Point]) -> Result<f64> {
    iou_convex(&convex_hull(a), &convex_hull(b))
}

fn convex_ring(ring: &[Point]) -> Result<Vec<Point>> {
    if ring.len() < 3 {
        return Err(GeometryError::DegeneratePolygon("fewer than 3 vertices"));
    }
    if ring.iter().any(|p| !p.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let mut v = ring.to_vec();
    let area = signed_area(&v);
    if area.abs() <= EPS {
        return Err(GeometryError::DegeneratePolygon("zero area"));
    }
    if area < 0.0 {
        v.reverse();
    }
    if !is_convex_ccw(&v) {
        return Err(GeometryError::NotConvex);
    }
    Ok(v)
}

/// Generic IoU between two geometries: exact for box pairs, clipping for
/// convex shapes, hull-based otherwise.
pub fn iou(a: &Geometry, b: &Geometry) -> f64 {
    match (a, b) {
        (Geometry::Hbb(x), Geometry::Hbb(y)) => iou_hbb(x, y),
        _ => iou_convex_hull(&a.vertices(), &b.vertices()).unwrap_or(0.0),
    }
}

/// One bit per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    words: Vec<u64>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyRaster(width, height));
        }
        let bits = width as usize * height as usize;
        Ok(Self {
            width,
            height,
            words: vec![0; bits.div_ceil(64)],
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        if x >= self.width || y >= self.height {
            return false;
        }
        let i = self.index(x, y);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, x: u32, y: u32) {
        let i = self.index(x, y);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Pixels set in both masks. `None` on a size mismatch.
    pub fn intersection_count(&self, other: &BinaryMask) -> Option<u64> {
        self.same_shape(other).then(|| {
            self.words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| (a & b).count_ones() as u64)
                .sum()
        })
    }

    pub fn union_with(&mut self, other: &BinaryMask) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    /// Fills pixel centers inside `ring` under the even-odd rule.
    pub fn fill_ring(&mut self, ring: &[Point]) {
        let n = ring.len();
        if n < 3 {
            return;
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in ring {
            lo = lo.min(p.y);
            hi = hi.max(p.y);
        }
        let row_start = ((lo - 0.5).ceil().max(0.0)) as u32;
        let row_end = ((hi - 0.5).floor().min(self.height as f64 - 1.0)).max(-1.0);
        if row_end < 0.0 {
            return;
        }
        let mut xs: Vec<f64> = Vec::new();
        for row in row_start..=(row_end as u32) {
            let y = row as f64 + 0.5;
            xs.clear();
            for i in 0..n {
                let a = ring[i];
                let b = ring[(i + 1) % n];
                if (a.y > y) != (b.y > y) {
                    xs.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
                }
            }
            xs.sort_by(f64::total_cmp);
            for pair in xs.chunks_exact(2) {
                // centers c with pair[0] <= c < pair[1]
                let first = (pair[0] - 0.5).ceil().max(0.0);
                let last = ((pair[1] - 0.5).ceil() - 1.0).min(self.width as f64 - 1.0);
                if last < first {
                    continue;
                }
                for col in (first as u32)..=(last as u32) {
                    self.set(col, row);
                }
            }
        }
    }
}

/// Rasterizes polygons at pixel centers. A pixel is set when its center lies
/// inside any of the polygons under the even-odd rule.
pub fn rasterize(shapes: &[Polygon], width: u32, height: u32) -> Result<BinaryMask> {
    let mut mask = BinaryMask::new(width, height)?;
    for p in shapes {
        mask.fill_ring(p.vertices());
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(pts: &[(f64, f64)]) -> Result<Polygon> {
        Polygon::new(pts.iter().map(|&p| p.into()).collect())
    }

    #[test]
    fn area_examples() {
        assert_eq!(polygon_area(&poly(&[(0., 0.), (1., 0.), (0., 1.)]).unwrap()), 0.5);
        let sq = poly(&[(0., 0.), (1., 0.), (1., 1.), (0., 1.)]).unwrap();
        assert_eq!(polygon_area(&sq), 1.0);
        assert!(matches!(
            poly(&[(0., 0.), (1., 0.)]),
            Err(GeometryError::DegeneratePolygon(_))
        ));
    }

    #[test]
    fn winding_normalized_keeps_first_vertex() {
        let cw = poly(&[(0., 0.), (0., 1.), (1., 1.), (1., 0.)]).unwrap();
        assert_eq!(cw.vertices()[0], Point::new(0., 0.));
        assert!(signed_area(cw.vertices()) > 0.0);
    }

    #[test]
    fn bowtie_rejected() {
        assert_eq!(
            poly(&[(0., 0.), (3., 2.), (3., 0.), (0., 1.)]),
            Err(GeometryError::SelfIntersecting)
        );
    }

    #[test]
    fn aabb_examples() {
        let diamond = poly(&[(1., 0.), (2., 1.), (1., 2.), (0., 1.)]).unwrap();
        assert_eq!(aabb_of(&diamond), Hbb::new(0., 0., 2., 2.).unwrap());
        let tri = poly(&[(0., 0.), (4., 0.), (0., 3.)]).unwrap();
        assert_eq!(aabb_of(&tri), Hbb::new(0., 0., 4., 3.).unwrap());
        let sq = poly(&[(1., 1.), (3., 1.), (3., 3.), (1., 3.)]).unwrap();
        assert_eq!(aabb_of(&sq), Hbb::new(1., 1., 3., 3.).unwrap());
    }

    #[test]
    fn min_area_rect_examples() {
        let sq = poly(&[(1., 1.), (3., 1.), (3., 3.), (1., 3.)]).unwrap();
        assert!((min_area_rect(&sq).unwrap().area() - 4.0).abs() < 1e-9);
        let diamond = poly(&[(1., 0.), (2., 1.), (1., 2.), (0., 1.)]).unwrap();
        assert!((min_area_rect(&diamond).unwrap().area() - 2.0).abs() < 1e-9);
        assert!(min_area_rect_of_points(&[(0., 0.).into(), (1., 1.).into(), (2., 2.).into()]).is_err());
    }

    #[test]
    fn hbb_iou_examples() {
        let a = Hbb::new(0., 0., 1., 1.).unwrap();
        let b = Hbb::new(0.5, 0., 1.5, 1.).unwrap();
        let far = Hbb::new(5., 5., 6., 6.).unwrap();
        assert_eq!(iou_hbb(&a, &a), 1.0);
        assert_eq!(iou_hbb(&a, &far), 0.0);
        assert!((iou_hbb(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
        let flat = Hbb::new(0., 0., 0., 1.).unwrap();
        assert_eq!(iou_hbb(&flat, &flat), 0.0);
        assert_eq!(iou_hbb(&a, &b), iou_hbb(&b, &a));
    }

    #[test]
    fn convex_iou_examples() {
        let sq = [(-1., -1.), (1., -1.), (1., 1.), (-1., 1.)].map(Point::from);
        let r = 2f64.sqrt();
        let rot = [(r, 0.), (0., r), (-r, 0.), (0., -r)].map(Point::from);
        assert!((iou_convex(&sq, &sq).unwrap() - 1.0).abs() < 1e-12);
        let far = sq.map(|p| Point::new(p.x + 10., p.y));
        assert_eq!(iou_convex(&sq, &far).unwrap(), 0.0);
        // octagon area 8(sqrt2 - 1), union 8 - that
        let inter = 8.0 * (r - 1.0);
        let expected = inter / (8.0 - inter);
        assert!((iou_convex(&sq, &rot).unwrap() - expected).abs() < 1e-9);
        assert!((expected - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-3);
    }

    #[test]
    fn rasterize_examples() {
        let full = poly(&[(0., 0.), (10., 0.), (10., 10.), (0., 10.)]).unwrap();
        assert_eq!(rasterize(&[full], 10, 10).unwrap().count_ones(), 100);
        assert_eq!(rasterize(&[], 10, 10).unwrap().count_ones(), 0);
        let left = poly(&[(0., 0.), (50., 0.), (50., 100.), (0., 100.)]).unwrap();
        assert_eq!(rasterize(&[left], 100, 100).unwrap().count_ones(), 5000);
        assert!(rasterize(&[], 0, 3).is_err());
    }

    #[test]
    fn serde_forms() {
        let g = Geometry::Hbb(Hbb::new(1., 2., 3., 4.).unwrap());
        assert_eq!(serde_json::to_string(&g).unwrap(), r#"{"hbb":[1.0,2.0,3.0,4.0]}"#);
        let bad: std::result::Result<Geometry, _> = serde_json::from_str(r#"{"hbb":[3,2,1,4]}"#);
        assert!(bad.is_err());
        let p: Geometry = serde_json::from_str(r#"{"poly":[[0,0],[0,1],[1,0]]}"#).unwrap();
        assert!(signed_area(&p.vertices()) > 0.0);
    }
}

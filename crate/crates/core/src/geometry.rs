//! Convex polygon algebra, segment clipping and point location.
//!
//! Every region the multimesh method integrates over is built from convex
//! pieces: triangles of the premeshes intersected with, or minus, convex
//! predomains. All predicates use plain floating point with the single
//! absolute tolerance [`GEOMETRY_TOL`].

use crate::{Point, Vector};

/// Polygons with area, and segments with length, below this value are
/// treated as empty.
pub const GEOMETRY_TOL: f64 = 1e-12;

/// Signed distances closer to a line than this are snapped onto it.
const SIDE_TOL: f64 = 1e-14;

#[inline]
pub fn cross(a: &Vector, b: &Vector) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Twice the signed area of the triangle `abc`.
#[inline]
pub fn orient(a: &Point, b: &Point, c: &Point) -> f64 {
    cross(&(b - a), &(c - a))
}

pub fn triangle_area(t: &[Point; 3]) -> f64 {
    0.5 * orient(&t[0], &t[1], &t[2])
}

/// Oriented line through `origin` along `direction`. The left side is the
/// kept side in every clipping operation.
#[derive(Clone, Copy, Debug)]
pub struct Line {
    pub origin: Point,
    pub direction: Vector,
}

impl Line {
    pub fn through(a: Point, b: Point) -> Self {
        Line {
            origin: a,
            direction: b - a,
        }
    }

    pub fn reversed(&self) -> Self {
        Line {
            origin: self.origin,
            direction: -self.direction,
        }
    }

    /// Signed distance of `p`, positive on the left.
    #[inline]
    pub fn signed_distance(&self, p: &Point) -> f64 {
        let len = self.direction.norm();
        if len == 0.0 {
            return 0.0;
        }
        cross(&self.direction, &(p - self.origin)) / len
    }

    #[inline]
    fn snapped_distance(&self, p: &Point) -> f64 {
        let d = self.signed_distance(p);
        if d.abs() < SIDE_TOL {
            0.0
        } else {
            d
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub fn new(a: Point, b: Point) -> Self {
        Segment { a, b }
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    /// Point at parameter `t`; exact at both endpoints.
    pub fn at(&self, t: f64) -> Point {
        if t == 1.0 {
            self.b
        } else {
            self.a + (self.b - self.a) * t
        }
    }

    pub fn midpoint(&self) -> Point {
        self.at(0.5)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        Aabb { min, max }
    }

    pub fn merge(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: Point::new(self.min.x.min(other.min.x), self.min.y.min(other.min.y)),
            max: Point::new(self.max.x.max(other.max.x), self.max.y.max(other.max.y)),
        }
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        self.min.x <= other.max.x + GEOMETRY_TOL
            && other.min.x <= self.max.x + GEOMETRY_TOL
            && self.min.y <= other.max.y + GEOMETRY_TOL
            && other.min.y <= self.max.y + GEOMETRY_TOL
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.min.x - GEOMETRY_TOL
            && p.x <= self.max.x + GEOMETRY_TOL
            && p.y >= self.min.y - GEOMETRY_TOL
            && p.y <= self.max.y + GEOMETRY_TOL
    }

    fn center(&self) -> Point {
        nalgebra::center(&self.min, &self.max)
    }
}

/// Counterclockwise convex polygon. An empty vertex list is the empty set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
}

impl ConvexPolygon {
    /// Builds a polygon from vertices listed in either orientation.
    /// Duplicate and collinear vertices are dropped and a polygon whose
    /// area falls below [`GEOMETRY_TOL`] becomes empty.
    pub fn new(vertices: Vec<Point>) -> Self {
        let mut poly = ConvexPolygon { vertices };
        poly.normalize();
        poly
    }

    pub fn empty() -> Self {
        ConvexPolygon::default()
    }

    pub fn triangle(t: &[Point; 3]) -> Self {
        ConvexPolygon::new(t.to_vec())
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        ConvexPolygon::new(vec![
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// Edges as oriented lines with the polygon interior on the left.
    pub fn edges(&self) -> impl Iterator<Item = Line> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| Line::through(self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Closed containment with tolerance `tol` (signed distance to every
    /// edge at least `-tol`).
    pub fn contains(&self, p: &Point, tol: f64) -> bool {
        !self.is_empty() && self.edges().all(|e| e.signed_distance(p) >= -tol)
    }

    /// Open containment: at least `tol` away from every edge.
    pub fn contains_strictly(&self, p: &Point, tol: f64) -> bool {
        !self.is_empty() && self.edges().all(|e| e.signed_distance(p) > tol)
    }

    fn normalize(&mut self) {
        let v = &mut self.vertices;
        v.dedup_by(|a, b| (*a - *b).norm() <= SIDE_TOL);
        while v.len() > 1 && (v[0] - v[v.len() - 1]).norm() <= SIDE_TOL {
            v.pop();
        }
        // Drop collinear vertices until none remain.
        let mut changed = true;
        while changed && v.len() >= 3 {
            changed = false;
            let n = v.len();
            for i in 0..n {
                let prev = v[(i + n - 1) % n];
                let next = v[(i + 1) % n];
                // distance of v[i] from the chord prev-next
                if orient(&prev, &v[i], &next).abs() <= SIDE_TOL * (next - prev).norm() {
                    v.remove(i);
                    changed = true;
                    break;
                }
            }
        }
        if v.len() < 3 {
            v.clear();
            return;
        }
        let signed = shoelace_signed(v);
        if signed < 0.0 {
            v.reverse();
        }
        if signed.abs() < GEOMETRY_TOL {
            v.clear();
        }
    }
}

fn shoelace_signed(v: &[Point]) -> f64 {
    let n = v.len();
    if n < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        twice += a.x * b.y - a.y * b.x;
    }
    0.5 * twice
}

fn shoelace(v: &[Point]) -> f64 {
    shoelace_signed(v).max(0.0)
}

/// Keeps the part of `poly` on the left of `line` (Sutherland–Hodgman step).
pub fn clip_halfplane(poly: &ConvexPolygon, line: &Line) -> ConvexPolygon {
    let v = poly.vertices();
    if v.is_empty() {
        return ConvexPolygon::empty();
    }
    let dist: Vec<f64> = v.iter().map(|p| line.snapped_distance(p)).collect();
    if dist.iter().all(|&d| d >= 0.0) {
        return poly.clone();
    }
    if dist.iter().all(|&d| d <= 0.0) {
        return ConvexPolygon::empty();
    }
    let n = v.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let j = (i + 1) % n;
        let (da, db) = (dist[i], dist[j]);
        if da >= 0.0 {
            out.push(v[i]);
        }
        if (da > 0.0 && db < 0.0) || (da < 0.0 && db > 0.0) {
            let t = da / (da - db);
            out.push(v[i] + (v[j] - v[i]) * t);
        }
    }
    ConvexPolygon::new(out)
}

/// `a ∩ b` by clipping `a` against every edge of `b`.
pub fn intersect_convex(a: &ConvexPolygon, b: &ConvexPolygon) -> ConvexPolygon {
    if a.is_empty() || b.is_empty() || !a.aabb().intersects(&b.aabb()) {
        return ConvexPolygon::empty();
    }
    let mut out = a.clone();
    for edge in b.edges() {
        out = clip_halfplane(&out, &edge);
        if out.is_empty() {
            break;
        }
    }
    out
}

/// `poly \ sub` as disjoint convex pieces. Piece `e` is the part of `poly`
/// outside edge `e` of `sub` but inside all earlier edges.
pub fn subtract_convex(poly: &ConvexPolygon, sub: &ConvexPolygon) -> Vec<ConvexPolygon> {
    if poly.is_empty() {
        return Vec::new();
    }
    if sub.is_empty() || !poly.aabb().intersects(&sub.aabb()) {
        return vec![poly.clone()];
    }
    let mut pieces = Vec::new();
    let mut rest = poly.clone();
    for edge in sub.edges() {
        let outside = clip_halfplane(&rest, &edge.reversed());
        if !outside.is_empty() {
            pieces.push(outside);
        }
        rest = clip_halfplane(&rest, &edge);
        if rest.is_empty() {
            break;
        }
    }
    pieces
}

/// Subtracts each polygon of `subs` in turn from every piece of `pieces`.
pub fn subtract_all<'a>(
    pieces: Vec<ConvexPolygon>,
    subs: impl IntoIterator<Item = &'a ConvexPolygon>,
) -> Vec<ConvexPolygon> {
    let mut pieces = pieces;
    for sub in subs {
        if pieces.is_empty() {
            break;
        }
        pieces = pieces
            .iter()
            .flat_map(|p| subtract_convex(p, sub))
            .collect();
    }
    pieces
}

/// Parameter interval `[t0, t1] ⊂ [0, 1]` of `seg ∩ poly` (Cyrus–Beck), or
/// `None` when the intersection is shorter than [`GEOMETRY_TOL`].
pub fn clip_segment_params(seg: &Segment, poly: &ConvexPolygon) -> Option<(f64, f64)> {
    if poly.is_empty() {
        return None;
    }
    let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
    for edge in poly.edges() {
        let da = edge.snapped_distance(&seg.a);
        let db = edge.snapped_distance(&seg.b);
        if da < 0.0 && db < 0.0 {
            return None;
        }
        if da >= 0.0 && db >= 0.0 {
            continue;
        }
        let t = da / (da - db);
        if da < 0.0 {
            t0 = t0.max(t);
        } else {
            t1 = t1.min(t);
        }
        if t0 >= t1 {
            return None;
        }
    }
    if (t1 - t0) * seg.length() < GEOMETRY_TOL {
        return None;
    }
    Some((t0, t1))
}

/// `seg ∩ poly`; convexity makes this a single sub-segment or nothing.
pub fn clip_segment(seg: &Segment, poly: &ConvexPolygon) -> Option<Segment> {
    clip_segment_params(seg, poly).map(|(t0, t1)| Segment::new(seg.at(t0), seg.at(t1)))
}

/// Fan triangulation from the first vertex.
pub fn triangulate_convex(poly: &ConvexPolygon) -> Vec<[Point; 3]> {
    let v = poly.vertices();
    if v.len() < 3 {
        return Vec::new();
    }
    (1..v.len() - 1).map(|i| [v[0], v[i], v[i + 1]]).collect()
}

/// Closed point-in-triangle test for a counterclockwise triangle.
pub fn triangle_contains(t: &[Point; 3], p: &Point, tol: f64) -> bool {
    (0..3).all(|e| Line::through(t[e], t[(e + 1) % 3]).signed_distance(p) >= -tol)
}

enum Node {
    Leaf {
        aabb: Aabb,
        items: Vec<usize>,
    },
    Inner {
        aabb: Aabb,
        children: Box<[Node; 2]>,
    },
}

impl Node {
    fn aabb(&self) -> &Aabb {
        match self {
            Node::Leaf { aabb, .. } | Node::Inner { aabb, .. } => aabb,
        }
    }
}

const LEAF_SIZE: usize = 4;

/// Bounding-box tree over a set of triangles (usually the active cells of
/// one mesh).
pub struct CellLocator {
    triangles: Vec<(usize, [Point; 3])>,
    root: Option<Node>,
}

impl CellLocator {
    /// Builds the tree over `(cell index, triangle)` pairs.
    pub fn new(triangles: Vec<(usize, [Point; 3])>) -> Self {
        let boxes: Vec<Aabb> = triangles
            .iter()
            .map(|(_, t)| Aabb::from_points(t))
            .collect();
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let root = if order.is_empty() {
            None
        } else {
            Some(build_node(&boxes, &mut order))
        };
        CellLocator { triangles, root }
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Cell containing `p`; on shared edges or vertices the lowest cell
    /// index wins.
    pub fn locate(&self, p: &Point) -> Option<usize> {
        let mut best: Option<usize> = None;
        self.visit(&Aabb { min: *p, max: *p }, &mut |slot| {
            let (cell, tri) = &self.triangles[slot];
            if triangle_contains(tri, p, GEOMETRY_TOL) && best.is_none_or(|b| *cell < b) {
                best = Some(*cell);
            }
        });
        best
    }

    /// Cells whose bounding boxes overlap `query`, sorted by index.
    pub fn query(&self, query: &Aabb) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit(query, &mut |slot| out.push(self.triangles[slot].0));
        out.sort_unstable();
        out
    }

    fn visit(&self, query: &Aabb, f: &mut impl FnMut(usize)) {
        let Some(root) = &self.root else { return };
        let mut stack = vec![root];
        while let Some(node) = stack.pop() {
            if !node.aabb().intersects(query) {
                continue;
            }
            match node {
                Node::Leaf { items, .. } => {
                    for &slot in items {
                        if Aabb::from_points(&self.triangles[slot].1).intersects(query) {
                            f(slot);
                        }
                    }
                }
                Node::Inner { children, .. } => {
                    stack.push(&children[0]);
                    stack.push(&children[1]);
                }
            }
        }
    }
}

fn build_node(boxes: &[Aabb], items: &mut [usize]) -> Node {
    let aabb = items
        .iter()
        .map(|&i| boxes[i])
        .reduce(|a, b| a.merge(&b))
        .expect("non-empty node");
    if items.len() <= LEAF_SIZE {
        return Node::Leaf {
            aabb,
            items: items.to_vec(),
        };
    }
    let extent = aabb.max - aabb.min;
    let axis = if extent.x >= extent.y { 0 } else { 1 };
    items.sort_by(|&a, &b| {
        boxes[a].center()[axis]
            .total_cmp(&boxes[b].center()[axis])
            .then(a.cmp(&b))
    });
    let mid = items.len() / 2;
    let (left, right) = items.split_at_mut(mid);
    Node::Inner {
        aabb,
        children: Box::new([build_node(boxes, left), build_node(boxes, right)]),
    }
}

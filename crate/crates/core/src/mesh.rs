//! Triangle premeshes, structured generation and predomain placement.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, SQRT_2};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{triangle_area, Aabb, ConvexPolygon, GEOMETRY_TOL};
use crate::{Error, Point, Result, Vector};

/// Similarity transform `x ↦ translation + scale · R(rotation) · x` that maps
/// the unit square onto a predomain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub scale: f64,
    pub rotation: f64,
    pub translation: [f64; 2],
}

impl Default for Placement {
    fn default() -> Self {
        Placement::identity()
    }
}

impl Placement {
    pub fn identity() -> Self {
        Placement {
            scale: 1.0,
            rotation: 0.0,
            translation: [0.0, 0.0],
        }
    }

    pub fn new(scale: f64, rotation: f64, translation: [f64; 2]) -> Result<Self> {
        let p = Placement {
            scale,
            rotation,
            translation,
        };
        p.validate()?;
        Ok(p)
    }

    /// Square of side `side` rotated by `rotation` about its own center.
    pub fn centered(side: f64, rotation: f64, center: [f64; 2]) -> Result<Self> {
        let (s, c) = rotation.sin_cos();
        let half = 0.5 * side;
        let offset = Vector::new(c * half - s * half, s * half + c * half);
        Placement::new(side, rotation, [center[0] - offset.x, center[1] - offset.y])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidPlacement(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        if !self.rotation.is_finite() || self.translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidPlacement("non-finite placement".into()));
        }
        Ok(())
    }

    pub fn apply(&self, p: &Point) -> Point {
        let (s, c) = self.rotation.sin_cos();
        let x = self.scale * (c * p.x - s * p.y) + self.translation[0];
        let y = self.scale * (s * p.x + c * p.y) + self.translation[1];
        Point::new(x, y)
    }

    /// Image of the unit square corners, counterclockwise.
    pub fn corners(&self) -> [Point; 4] {
        [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)].map(|(x, y)| self.apply(&Point::new(x, y)))
    }

    /// Whether the placed square lies strictly inside `extent`.
    pub fn fits_strictly_inside(&self, extent: &Aabb) -> bool {
        self.corners().iter().all(|c| {
            c.x > extent.min.x && c.x < extent.max.x && c.y > extent.min.y && c.y < extent.max.y
        })
    }
}

/// Simplicial mesh of one predomain.
#[derive(Clone, Debug)]
pub struct Premesh {
    vertices: Vec<Point>,
    cells: Vec<[usize; 3]>,
    /// `(cell, local edge)` where local edge `e` joins local vertices `e` and `e + 1`.
    boundary_facets: Vec<(usize, usize)>,
    mesh_index: usize,
    h: f64,
    placement: Placement,
}

impl Premesh {
    /// Builds a mesh from raw parts, checking orientation and the
    /// edge-manifold property.
    pub fn from_parts(
        vertices: Vec<Point>,
        cells: Vec<[usize; 3]>,
        placement: Placement,
    ) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidMesh("mesh has no cells".into()));
        }
        let mut edges: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        let mut h = 0.0_f64;
        for (c, cell) in cells.iter().enumerate() {
            if cell.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "cell {c} references a missing vertex"
                )));
            }
            let tri = cell.map(|v| vertices[v]);
            if triangle_area(&tri) <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "cell {c} is not counterclockwise"
                )));
            }
            for e in 0..3 {
                let (a, b) = (cell[e], cell[(e + 1) % 3]);
                h = h.max((vertices[b] - vertices[a]).norm());
                edges.entry((a.min(b), a.max(b))).or_default().push((c, e));
            }
        }
        let mut boundary_facets = Vec::new();
        for (edge, users) in &edges {
            match users.len() {
                1 => boundary_facets.push(users[0]),
                2 => {}
                n => {
                    return Err(Error::InvalidMesh(format!(
                        "edge {edge:?} is shared by {n} cells"
                    )))
                }
            }
        }
        boundary_facets.sort_unstable();
        Ok(Premesh {
            vertices,
            cells,
            boundary_facets,
            mesh_index: 0,
            h,
            placement,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn boundary_facets(&self) -> &[(usize, usize)] {
        &self.boundary_facets
    }

    pub fn mesh_index(&self) -> usize {
        self.mesh_index
    }

    pub(crate) fn set_mesh_index(&mut self, index: usize) {
        self.mesh_index = index;
    }

    /// Longest edge over all cells.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn placement(&self) -> &Placement {
        &self.placement
    }

    pub fn cell_triangle(&self, cell: usize) -> [Point; 3] {
        self.cells[cell].map(|v| self.vertices[v])
    }

    /// Endpoints of a boundary facet, in the counterclockwise order of its cell.
    pub fn facet_endpoints(&self, (cell, edge): (usize, usize)) -> (Point, Point) {
        let c = &self.cells[cell];
        (self.vertices[c[edge]], self.vertices[c[(edge + 1) % 3]])
    }

    pub fn area(&self) -> f64 {
        (0..self.cells.len())
            .map(|c| triangle_area(&self.cell_triangle(c)))
            .sum()
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// The predomain as a convex polygon (collinear boundary vertices removed).
    pub fn domain_polygon(&self) -> Result<ConvexPolygon> {
        let poly = ConvexPolygon::new(boundary_polygon(self)?);
        // a convex domain keeps its full area after collinear vertices are dropped
        if (poly.area() - self.area()).abs() > GEOMETRY_TOL.max(1e-10 * self.area()) {
            return Err(Error::InvalidMesh("predomain is not convex".into()));
        }
        Ok(poly)
    }

    /// Writes `v x y` and `c i0 i1 i2` lines.
    pub fn write_dump(&self, out: &mut impl Write) -> std::io::Result<()> {
        for v in &self.vertices {
            writeln!(out, "v {:.17e} {:.17e}", v.x, v.y)?;
        }
        for c in &self.cells {
            writeln!(out, "c {} {} {}", c[0], c[1], c[2])?;
        }
        Ok(())
    }
}

/// Structured mesh of the unit square with `n` subdivisions per side, each
/// grid square split along its (+1,+1) diagonal, mapped by `placement`.
/// When `background` is given the placed square must lie strictly inside it.
pub fn build_structured_mesh(
    n: usize,
    placement: &Placement,
    background: Option<&Aabb>,
) -> Result<Premesh> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "number of subdivisions must be at least 1".into(),
        ));
    }
    placement.validate()?;
    if let Some(extent) = background {
        if !placement.fits_strictly_inside(extent) {
            return Err(Error::InvalidPlacement(
                "placed domain touches or crosses the background boundary".into(),
            ));
        }
    }
    let step = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for b in 0..=n {
        for a in 0..=n {
            vertices.push(placement.apply(&Point::new(a as f64 * step, b as f64 * step)));
        }
    }
    let idx = |a: usize, b: usize| b * (n + 1) + a;
    let mut cells = Vec::with_capacity(2 * n * n);
    for b in 0..n {
        for a in 0..n {
            let (v00, v10, v11, v01) = (idx(a, b), idx(a + 1, b), idx(a + 1, b + 1), idx(a, b + 1));
            cells.push([v00, v10, v11]);
            cells.push([v00, v11, v01]);
        }
    }
    Premesh::from_parts(vertices, cells, *placement)
}

/// Counterclockwise boundary loop of a mesh, starting at its lowest-index
/// boundary vertex.
pub fn boundary_polygon(mesh: &Premesh) -> Result<Vec<Point>> {
    let mut next: HashMap<usize, usize> = HashMap::new();
    for &facet in mesh.boundary_facets() {
        let c = &mesh.cells[facet.0];
        let (a, b) = (c[facet.1], c[(facet.1 + 1) % 3]);
        if next.insert(a, b).is_some() {
            return Err(Error::InvalidMesh("boundary is not a simple loop".into()));
        }
    }
    let start = *next
        .keys()
        .min()
        .ok_or_else(|| Error::InvalidMesh("mesh has no boundary".into()))?;
    let mut loop_vertices = vec![start];
    let mut current = next[&start];
    while current != start {
        loop_vertices.push(current);
        current = *next
            .get(&current)
            .ok_or_else(|| Error::InvalidMesh("open boundary chain".into()))?;
        if loop_vertices.len() > next.len() {
            return Err(Error::InvalidMesh("boundary is not a simple loop".into()));
        }
    }
    if loop_vertices.len() != next.len() {
        return Err(Error::InvalidMesh(
            "mesh has more than one boundary loop".into(),
        ));
    }
    Ok(loop_vertices
        .into_iter()
        .map(|v| mesh.vertices[v])
        .collect())
}

/// Random square predomains strictly inside `[margin, 1 - margin]²`.
///
/// Side lengths are uniform in `side_range`, rotations uniform in
/// `[0, π/2)` and centers uniform over the positions where the rotated
/// square fits. The sequence is determined by `seed`.
pub fn random_placements(
    count: usize,
    seed: u64,
    side_range: (f64, f64),
    margin: f64,
) -> Result<Vec<Placement>> {
    let (s_min, s_max) = side_range;
    if !(s_min > 0.0 && s_min <= s_max && s_max.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "side range must satisfy 0 < min <= max, got [{s_min}, {s_max}]"
        )));
    }
    if margin.is_nan() || margin < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "margin must be non-negative, got {margin}"
        )));
    }
    let room = 1.0 - 2.0 * margin;
    // worst case is a square rotated by π/4
    let diagonal = s_max * SQRT_2;
    if diagonal > room || (margin == 0.0 && diagonal >= room) {
        return Err(Error::InvalidArgument(format!(
            "a rotated square of side {s_max} does not fit inside the margin {margin}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let side = s_min + (s_max - s_min) * rng.random::<f64>();
        let rotation = FRAC_PI_2 * rng.random::<f64>();
        let half_extent = 0.5 * side * (rotation.cos() + rotation.sin());
        let lo = margin + half_extent;
        let width = (1.0 - margin - half_extent - lo).max(0.0);
        let cx = lo + width * rng.random::<f64>();
        let cy = lo + width * rng.random::<f64>();
        out.push(Placement::centered(side, rotation, [cx, cy])?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn single_subdivision() {
        let m = build_structured_mesh(1, &Placement::identity(), None).unwrap();
        assert_eq!(m.vertices().len(), 4);
        assert_eq!(m.num_cells(), 2);
        assert_abs_diff_eq!(m.area(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.h(), SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn areas_and_sizes() {
        let m = build_structured_mesh(4, &Placement::identity(), None).unwrap();
        assert_eq!(m.vertices().len(), 25);
        assert_eq!(m.num_cells(), 32);
        assert_abs_diff_eq!(m.area(), 1.0, epsilon = 1e-14);
        let placed = Placement::new(0.3, PI / 6.0, [0.4, 0.2]).unwrap();
        let m = build_structured_mesh(2, &placed, None).unwrap();
        assert_abs_diff_eq!(m.area(), 0.09, epsilon = 1e-14);
        assert_abs_diff_eq!(m.h(), 0.3 * SQRT_2 / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_structured_mesh(0, &Placement::identity(), None).is_err());
        let unit = Aabb::from_points(&[Point::new(0.0, 0.0), Point::new(1.0, 1.0)]);
        assert!(build_structured_mesh(2, &Placement::identity(), Some(&unit)).is_err());
        let inner = Placement::centered(0.5, 0.3, [0.5, 0.5]).unwrap();
        assert!(build_structured_mesh(2, &inner, Some(&unit)).is_ok());
        assert!(Placement::new(0.0, 0.0, [0.0, 0.0]).is_err());
    }

    #[test]
    fn boundary_loops() {
        let m = build_structured_mesh(1, &Placement::identity(), None).unwrap();
        let poly = boundary_polygon(&m).unwrap();
        assert_eq!(
            poly,
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(1.0, 1.0),
                Point::new(0.0, 1.0)
            ]
        );
        let perimeter = |poly: &[Point]| -> f64 {
            (0..poly.len())
                .map(|i| (poly[(i + 1) % poly.len()] - poly[i]).norm())
                .sum()
        };
        let m = build_structured_mesh(3, &Placement::identity(), None).unwrap();
        let poly = boundary_polygon(&m).unwrap();
        assert_eq!(poly.len(), 12);
        assert_abs_diff_eq!(perimeter(&poly), 4.0, epsilon = 1e-14);
        let half = Placement::new(0.5, 0.7, [0.3, 0.1]).unwrap();
        let m = build_structured_mesh(3, &half, None).unwrap();
        assert_abs_diff_eq!(
            perimeter(&boundary_polygon(&m).unwrap()),
            2.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(m.domain_polygon().unwrap().area(), 0.25, epsilon = 1e-14);
    }

    #[test]
    fn two_boundary_loops_are_rejected() {
        // two disjoint triangles
        let v = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(3.0, 0.0),
            Point::new(4.0, 0.0),
            Point::new(3.0, 1.0),
        ];
        let m = Premesh::from_parts(v, vec![[0, 1, 2], [3, 4, 5]], Placement::identity()).unwrap();
        assert!(boundary_polygon(&m).is_err());
    }

    #[test]
    fn edge_manifold_and_quasi_uniform() {
        for n in [1, 2, 5, 8] {
            let m = build_structured_mesh(n, &Placement::identity(), None).unwrap();
            let mut count: HashMap<(usize, usize), usize> = HashMap::new();
            for c in m.cells() {
                for e in 0..3 {
                    let (a, b) = (c[e], c[(e + 1) % 3]);
                    *count.entry((a.min(b), a.max(b))).or_default() += 1;
                }
            }
            assert!(count.values().all(|&k| k == 1 || k == 2));
            assert_eq!(count.values().filter(|&&k| k == 1).count(), 4 * n);
            let diam: Vec<f64> = (0..m.num_cells())
                .map(|c| {
                    let t = m.cell_triangle(c);
                    (0..3)
                        .map(|e| (t[(e + 1) % 3] - t[e]).norm())
                        .fold(0.0, f64::max)
                })
                .collect();
            let max = diam.iter().cloned().fold(0.0, f64::max);
            let min = diam.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(max / min <= 2.0);
        }
    }

    #[test]
    fn placements_are_deterministic_and_inside() {
        let a = random_placements(32, 7, (0.2, 0.4), 0.05).unwrap();
        let b = random_placements(32, 7, (0.2, 0.4), 0.05).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 32);
        for p in &a {
            for c in p.corners() {
                assert!(
                    c.x >= 0.05 && c.x <= 0.95 && c.y >= 0.05 && c.y <= 0.95,
                    "{c:?}"
                );
            }
        }
        assert!(random_placements(0, 1, (0.2, 0.4), 0.05)
            .unwrap()
            .is_empty());
        assert_ne!(a, random_placements(32, 8, (0.2, 0.4), 0.05).unwrap());
    }

    #[test]
    fn infeasible_placements_are_rejected() {
        assert!(random_placements(1, 0, (0.2, 0.7), 0.05).is_err());
        assert!(random_placements(1, 0, (0.4, 0.2), 0.05).is_err());
        assert!(random_placements(1, 0, (0.0, 0.2), 0.05).is_err());
        assert!(random_placements(1, 0, (0.2, 0.3), -0.1).is_err());
    }

    #[test]
    fn dump_format() {
        let m = build_structured_mesh(1, &Placement::identity(), None).unwrap();
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 4);
        assert!(text.contains("c 0 1 3\n"));
    }
}

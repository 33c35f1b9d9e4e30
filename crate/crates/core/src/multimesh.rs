//! The multimesh: an ordered stack of premeshes with cell classification,
//! active meshes and the quadrature databases of the four integration
//! measures.
//!
//! | measure | region                          | storage                      |
//! |---------|---------------------------------|------------------------------|
//! | `dX`    | visible domain Ω_i              | full cells + [`Self::cut_quadrature`] |
//! | `dI`    | interface Γ_ij, i > j           | [`Self::interface_db`]       |
//! | `dO`    | overlap O_ij, i < j             | [`Self::overlap_db`]         |
//! | `dC`    | cut cells of mesh i (whole)     | [`Self::cut_cells`]          |
//!
//! Mesh 0 is the background mesh of the unit square. Every later mesh is
//! placed on top of all earlier ones, so the visible part of mesh `i` is its
//! predomain minus the predomains of all meshes `m > i`.

use std::collections::BTreeMap;
use std::io::Write;

use crate::geometry::{
    clip_segment_params, intersect_convex, subtract_all, triangle_area, triangulate_convex, Aabb,
    CellLocator, ConvexPolygon, Segment, GEOMETRY_TOL,
};
use crate::mesh::Premesh;
use crate::quadrature::{segment_rule, QuadPoint, TriangleRule};
use crate::{Error, Point, Result, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    /// Not touched by any higher predomain.
    Uncut,
    /// Partially covered by higher predomains.
    Cut,
    /// Completely covered; dropped from the active mesh.
    Covered,
}

/// Quadrature point on Γ_ij.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterfaceQuadPoint {
    pub point: Point,
    pub weight: f64,
    /// Unit normal pointing out of predomain i.
    pub normal: Vector,
    /// Cell of mesh i carrying the boundary facet.
    pub cell_hi: usize,
    /// Cell of mesh j containing the point.
    pub cell_lo: usize,
}

/// Quadrature point on O_ij.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverlapQuadPoint {
    pub point: Point,
    pub weight: f64,
    /// Cut cell of mesh i.
    pub cell_i: usize,
    /// Cell of mesh j containing the point.
    pub cell_j: usize,
}

/// Straight piece of Γ_ij lying inside one cell of each mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterfaceSegment {
    pub segment: Segment,
    pub normal: Vector,
    pub cell_hi: usize,
    pub cell_lo: usize,
}

/// Triangle of O_ij lying inside one cell of each mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverlapPiece {
    pub triangle: [Point; 3],
    pub cell_i: usize,
    pub cell_j: usize,
}

pub struct MultiMesh {
    meshes: Vec<Premesh>,
    domains: Vec<ConvexPolygon>,
    kinds: Vec<Vec<CellKind>>,
    active: Vec<Vec<usize>>,
    visible_pieces: Vec<BTreeMap<usize, Vec<[Point; 3]>>>,
    cut_quadrature: Vec<BTreeMap<usize, Vec<QuadPoint>>>,
    interfaces: BTreeMap<(usize, usize), Vec<InterfaceSegment>>,
    interface_db: BTreeMap<(usize, usize), Vec<InterfaceQuadPoint>>,
    overlaps: BTreeMap<(usize, usize), Vec<OverlapPiece>>,
    overlap_db: BTreeMap<(usize, usize), Vec<OverlapQuadPoint>>,
    locators: Vec<CellLocator>,
    hidden: Vec<usize>,
    quad_order: usize,
}

/// Builds the multimesh of `meshes` placed in the given order. `meshes[0]`
/// must be a mesh of the unit square; every other mesh must lie strictly
/// inside it.
pub fn build_multimesh(meshes: Vec<Premesh>, quad_order: usize) -> Result<MultiMesh> {
    MultiMesh::new(meshes, quad_order)
}

impl MultiMesh {
    pub fn new(mut meshes: Vec<Premesh>, quad_order: usize) -> Result<Self> {
        if quad_order < 1 {
            return Err(Error::InvalidArgument(
                "quadrature order must be at least 1".into(),
            ));
        }
        if meshes.is_empty() {
            return Err(Error::InvalidArgument(
                "a multimesh needs a background mesh".into(),
            ));
        }
        let bg = meshes[0].aabb();
        let unit = [bg.min.x, bg.min.y, bg.max.x - 1.0, bg.max.y - 1.0];
        if unit.iter().any(|d| d.abs() > 1e-12) || (meshes[0].area() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMesh(
                "background mesh must cover the unit square".into(),
            ));
        }
        let mut domains = Vec::with_capacity(meshes.len());
        for (i, mesh) in meshes.iter_mut().enumerate() {
            mesh.set_mesh_index(i);
            let domain = mesh.domain_polygon()?;
            if i > 0
                && domain.vertices().iter().any(|v| {
                    v.x <= GEOMETRY_TOL
                        || v.y <= GEOMETRY_TOL
                        || v.x >= 1.0 - GEOMETRY_TOL
                        || v.y >= 1.0 - GEOMETRY_TOL
                })
            {
                return Err(Error::InvalidPlacement(format!(
                    "mesh {i} touches the boundary of the background domain"
                )));
            }
            domains.push(domain);
        }

        let mut mm = MultiMesh {
            kinds: Vec::new(),
            active: Vec::new(),
            visible_pieces: Vec::new(),
            cut_quadrature: Vec::new(),
            interfaces: BTreeMap::new(),
            interface_db: BTreeMap::new(),
            overlaps: BTreeMap::new(),
            overlap_db: BTreeMap::new(),
            locators: Vec::new(),
            hidden: Vec::new(),
            meshes,
            domains,
            quad_order,
        };
        mm.classify();
        mm.build_interfaces();
        mm.build_overlaps();
        mm.populate_databases();
        Ok(mm)
    }

    fn classify(&mut self) {
        for (i, mesh) in self.meshes.iter().enumerate() {
            let higher = &self.domains[i + 1..];
            let mut kinds = Vec::with_capacity(mesh.num_cells());
            let mut pieces_of = BTreeMap::new();
            for c in 0..mesh.num_cells() {
                let tri = mesh.cell_triangle(c);
                let area = triangle_area(&tri);
                let bbox = Aabb::from_points(&tri);
                let touching: Vec<&ConvexPolygon> = higher
                    .iter()
                    .filter(|d| d.aabb().intersects(&bbox))
                    .collect();
                if touching.is_empty() {
                    kinds.push(CellKind::Uncut);
                    continue;
                }
                let pieces = subtract_all(vec![ConvexPolygon::triangle(&tri)], touching);
                let visible: f64 = pieces.iter().map(|p| p.area()).sum();
                if visible <= area * GEOMETRY_TOL {
                    kinds.push(CellKind::Covered);
                } else if area - visible <= GEOMETRY_TOL {
                    kinds.push(CellKind::Uncut);
                } else {
                    kinds.push(CellKind::Cut);
                    pieces_of.insert(c, pieces.iter().flat_map(triangulate_convex).collect());
                }
            }
            let active: Vec<usize> = (0..mesh.num_cells())
                .filter(|&c| kinds[c] != CellKind::Covered)
                .collect();
            if active.is_empty() {
                self.hidden.push(i);
            }
            self.locators.push(CellLocator::new(
                active.iter().map(|&c| (c, mesh.cell_triangle(c))).collect(),
            ));
            self.kinds.push(kinds);
            self.active.push(active);
            self.visible_pieces.push(pieces_of);
        }
    }

    fn build_interfaces(&mut self) {
        let n = self.meshes.len();
        let mut interfaces: BTreeMap<(usize, usize), Vec<InterfaceSegment>> = BTreeMap::new();
        for i in 1..n {
            if self.is_hidden(i) {
                continue;
            }
            let mesh = &self.meshes[i];
            for &facet in mesh.boundary_facets() {
                if self.kinds[i][facet.0] == CellKind::Covered {
                    continue;
                }
                let (a, b) = mesh.facet_endpoints(facet);
                let seg = Segment::new(a, b);
                let len = seg.length();
                let normal = Vector::new(b.y - a.y, a.x - b.x) / len;
                let bbox = Aabb::from_points(&[a, b]);

                let mut ts = vec![0.0, 1.0];
                for (m, dom) in self.domains.iter().enumerate().skip(1) {
                    if m != i && dom.aabb().intersects(&bbox) {
                        if let Some((t0, t1)) = clip_segment_params(&seg, dom) {
                            ts.extend([t0, t1]);
                        }
                    }
                }
                for (ta, tb) in breakpoint_windows(ts, len) {
                    let mid = seg.at(0.5 * (ta + tb));
                    if self.domains[i + 1..]
                        .iter()
                        .any(|d| d.contains(&mid, GEOMETRY_TOL))
                    {
                        continue;
                    }
                    let owners: Vec<usize> = (0..i)
                        .rev()
                        .filter(|&m| {
                            !self.is_hidden(m) && self.domains[m].contains(&mid, GEOMETRY_TOL)
                        })
                        .collect();
                    let Some(&j) = owners.first() else { continue };
                    let sub = Segment::new(seg.at(ta), seg.at(tb));
                    for piece in self.split_by_cells(&sub, j) {
                        let mid = piece.midpoint();
                        let located = owners
                            .iter()
                            .find_map(|&m| self.locators[m].locate(&mid).map(|c| (m, c)));
                        if let Some((owner, cell_lo)) = located {
                            interfaces
                                .entry((i, owner))
                                .or_default()
                                .push(InterfaceSegment {
                                    segment: piece,
                                    normal,
                                    cell_hi: facet.0,
                                    cell_lo,
                                });
                        }
                    }
                }
            }
        }
        self.interfaces = interfaces;
    }

    /// Splits `seg` at every crossing with the edges of the active cells of mesh `j`.
    fn split_by_cells(&self, seg: &Segment, j: usize) -> Vec<Segment> {
        let len = seg.length();
        let mut ts = vec![0.0, 1.0];
        for c in self.locators[j].query(&Aabb::from_points(&[seg.a, seg.b])) {
            let tri = ConvexPolygon::triangle(&self.meshes[j].cell_triangle(c));
            if let Some((t0, t1)) = clip_segment_params(seg, &tri) {
                ts.extend([t0, t1]);
            }
        }
        breakpoint_windows(ts, len)
            .into_iter()
            .map(|(ta, tb)| Segment::new(seg.at(ta), seg.at(tb)))
            .collect()
    }

    fn build_overlaps(&mut self) {
        let n = self.meshes.len();
        for i in 0..n {
            let cut: Vec<usize> = self.cut_cells(i);
            for j in i + 1..n {
                if self.is_hidden(j) {
                    continue;
                }
                let dom_box = self.domains[j].aabb();
                let mut pieces = Vec::new();
                for &c in &cut {
                    let tri = self.meshes[i].cell_triangle(c);
                    let bbox = Aabb::from_points(&tri);
                    if !bbox.intersects(&dom_box) {
                        continue;
                    }
                    let k = ConvexPolygon::triangle(&tri);
                    for cj in self.locators[j].query(&bbox) {
                        let inter = intersect_convex(
                            &k,
                            &ConvexPolygon::triangle(&self.meshes[j].cell_triangle(cj)),
                        );
                        if inter.is_empty() {
                            continue;
                        }
                        let inter_box = inter.aabb();
                        let higher = self.domains[j + 1..]
                            .iter()
                            .filter(|d| d.aabb().intersects(&inter_box));
                        for piece in subtract_all(vec![inter], higher) {
                            pieces.extend(triangulate_convex(&piece).into_iter().map(|triangle| {
                                OverlapPiece {
                                    triangle,
                                    cell_i: c,
                                    cell_j: cj,
                                }
                            }));
                        }
                    }
                }
                if !pieces.is_empty() {
                    self.overlaps.insert((i, j), pieces);
                }
            }
        }
    }

    fn populate_databases(&mut self) {
        let rule = TriangleRule::new(self.quad_order);
        self.cut_quadrature = self
            .visible_pieces
            .iter()
            .map(|cells| {
                cells
                    .iter()
                    .map(|(&c, tris)| (c, tris.iter().flat_map(|t| rule.map(t)).collect()))
                    .collect()
            })
            .collect();
        self.interface_db = self
            .interfaces
            .iter()
            .map(|(&key, segs)| (key, interface_points(segs, self.quad_order)))
            .collect();
        self.overlap_db = self
            .overlaps
            .iter()
            .map(|(&key, pieces)| {
                let pts = pieces
                    .iter()
                    .flat_map(|p| {
                        rule.map(&p.triangle).map(move |q| OverlapQuadPoint {
                            point: q.point,
                            weight: q.weight,
                            cell_i: p.cell_i,
                            cell_j: p.cell_j,
                        })
                    })
                    .collect();
                (key, pts)
            })
            .collect();
    }

    /// Number of meshes including the background (N + 1).
    pub fn num_meshes(&self) -> usize {
        self.meshes.len()
    }

    pub fn mesh(&self, i: usize) -> &Premesh {
        &self.meshes[i]
    }

    pub fn meshes(&self) -> &[Premesh] {
        &self.meshes
    }

    /// Predomain of mesh `i` as a convex polygon.
    pub fn domain(&self, i: usize) -> &ConvexPolygon {
        &self.domains[i]
    }

    pub fn quad_order(&self) -> usize {
        self.quad_order
    }

    pub fn cell_kind(&self, i: usize, cell: usize) -> CellKind {
        self.kinds[i][cell]
    }

    pub fn cell_kinds(&self, i: usize) -> &[CellKind] {
        &self.kinds[i]
    }

    /// Active cells (uncut and cut) of mesh `i`, sorted.
    pub fn active_cells(&self, i: usize) -> &[usize] {
        &self.active[i]
    }

    pub fn is_active(&self, i: usize, cell: usize) -> bool {
        self.kinds[i]
            .get(cell)
            .is_some_and(|k| *k != CellKind::Covered)
    }

    /// The cut cells of mesh `i`; these carry the least-squares measure.
    pub fn cut_cells(&self, i: usize) -> Vec<usize> {
        self.kinds[i]
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == CellKind::Cut)
            .map(|(c, _)| c)
            .collect()
    }

    /// Meshes whose active mesh is empty.
    pub fn hidden_meshes(&self) -> &[usize] {
        &self.hidden
    }

    pub fn is_hidden(&self, i: usize) -> bool {
        self.hidden.contains(&i)
    }

    /// Locator over the active cells of mesh `i`.
    pub fn locator(&self, i: usize) -> &CellLocator {
        &self.locators[i]
    }

    /// Global mesh size: the largest `h` over non-hidden meshes.
    pub fn global_h(&self) -> f64 {
        (0..self.meshes.len())
            .filter(|&i| !self.is_hidden(i))
            .map(|i| self.meshes[i].h())
            .fold(0.0, f64::max)
    }

    /// Quadrature for `K ∩ Ω_i` on a cut cell at the build order; empty for
    /// cells that are not cut.
    pub fn cut_quadrature(&self, i: usize, cell: usize) -> &[QuadPoint] {
        self.cut_quadrature[i].get(&cell).map_or(&[], Vec::as_slice)
    }

    /// Triangulation of `K ∩ Ω_i` for a cut cell.
    pub fn visible_pieces(&self, i: usize, cell: usize) -> Option<&[[Point; 3]]> {
        self.visible_pieces[i].get(&cell).map(Vec::as_slice)
    }

    /// `dX` quadrature on `K ∩ Ω_i` exact to `degree`: the whole cell when
    /// uncut, the clipped pieces when cut, nothing when covered.
    pub fn dx_quadrature(&self, i: usize, cell: usize, rule: &TriangleRule) -> Vec<QuadPoint> {
        match self.kinds[i][cell] {
            CellKind::Uncut => rule.map(&self.meshes[i].cell_triangle(cell)).collect(),
            CellKind::Cut => self.visible_pieces[i][&cell]
                .iter()
                .flat_map(|t| rule.map(t))
                .collect(),
            CellKind::Covered => Vec::new(),
        }
    }

    /// Quadrature on Γ_ij (i > j); empty when the interface is empty.
    pub fn interface_db(&self, i: usize, j: usize) -> &[InterfaceQuadPoint] {
        self.interface_db.get(&(i, j)).map_or(&[], Vec::as_slice)
    }

    /// All non-empty interface databases keyed by `(i, j)`, i > j.
    pub fn interface_dbs(
        &self,
    ) -> impl Iterator<Item = (&(usize, usize), &Vec<InterfaceQuadPoint>)> {
        self.interface_db.iter()
    }

    pub fn interface_segments(&self, i: usize, j: usize) -> &[InterfaceSegment] {
        self.interfaces.get(&(i, j)).map_or(&[], Vec::as_slice)
    }

    /// Interface quadrature at an arbitrary polynomial degree.
    pub fn interface_quadrature(
        &self,
        degree: usize,
    ) -> BTreeMap<(usize, usize), Vec<InterfaceQuadPoint>> {
        self.interfaces
            .iter()
            .map(|(&key, segs)| (key, interface_points(segs, degree)))
            .collect()
    }

    /// Quadrature on O_ij (i < j); empty when the overlap is empty.
    pub fn overlap_db(&self, i: usize, j: usize) -> &[OverlapQuadPoint] {
        self.overlap_db.get(&(i, j)).map_or(&[], Vec::as_slice)
    }

    /// All non-empty overlap databases keyed by `(i, j)`, i < j.
    pub fn overlap_dbs(&self) -> impl Iterator<Item = (&(usize, usize), &Vec<OverlapQuadPoint>)> {
        self.overlap_db.iter()
    }

    pub fn overlap_pieces(&self, i: usize, j: usize) -> &[OverlapPiece] {
        self.overlaps.get(&(i, j)).map_or(&[], Vec::as_slice)
    }

    /// |Ω_i| summed from the `dX` measure.
    pub fn visible_area(&self, i: usize) -> f64 {
        self.active[i]
            .iter()
            .map(|&c| match self.kinds[i][c] {
                CellKind::Uncut => triangle_area(&self.meshes[i].cell_triangle(c)),
                _ => self.cut_quadrature(i, c).iter().map(|q| q.weight).sum(),
            })
            .sum()
    }

    /// Writes all `dX` (cut cells), `dI` and `dO` points as CSV.
    pub fn write_quadrature_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "measure,i,j,x,y,weight,cell_a,cell_b,nx,ny")?;
        for (i, cells) in self.cut_quadrature.iter().enumerate() {
            for (c, pts) in cells {
                for q in pts {
                    writeln!(
                        out,
                        "dX,{i},{i},{:.17e},{:.17e},{:.17e},{c},{c},0,0",
                        q.point.x, q.point.y, q.weight
                    )?;
                }
            }
        }
        for ((i, j), pts) in &self.interface_db {
            for q in pts {
                writeln!(
                    out,
                    "dI,{i},{j},{:.17e},{:.17e},{:.17e},{},{},{:.17e},{:.17e}",
                    q.point.x, q.point.y, q.weight, q.cell_hi, q.cell_lo, q.normal.x, q.normal.y
                )?;
            }
        }
        for ((i, j), pts) in &self.overlap_db {
            for q in pts {
                writeln!(
                    out,
                    "dO,{i},{j},{:.17e},{:.17e},{:.17e},{},{},0,0",
                    q.point.x, q.point.y, q.weight, q.cell_i, q.cell_j
                )?;
            }
        }
        Ok(())
    }
}

fn interface_points(segs: &[InterfaceSegment], degree: usize) -> Vec<InterfaceQuadPoint> {
    segs.iter()
        .flat_map(|s| {
            segment_rule(&s.segment.a, &s.segment.b, degree)
                .into_iter()
                .map(move |q| InterfaceQuadPoint {
                    point: q.point,
                    weight: q.weight,
                    normal: s.normal,
                    cell_hi: s.cell_hi,
                    cell_lo: s.cell_lo,
                })
        })
        .collect()
}

/// Sorted, deduplicated parameter windows of length at least [`GEOMETRY_TOL`].
fn breakpoint_windows(mut ts: Vec<f64>, len: f64) -> Vec<(f64, f64)> {
    ts.retain(|t| (0.0..=1.0).contains(t));
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() * len < GEOMETRY_TOL);
    ts.windows(2)
        .filter(|w| (w[1] - w[0]) * len >= GEOMETRY_TOL)
        .map(|w| (w[0], w[1]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_mesh, Placement};
    use approx::assert_abs_diff_eq;

    fn background(n: usize) -> Premesh {
        build_structured_mesh(n, &Placement::identity(), None).unwrap()
    }

    fn square(n: usize, side: f64, rotation: f64, center: [f64; 2]) -> Premesh {
        build_structured_mesh(
            n,
            &Placement::centered(side, rotation, center).unwrap(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn single_mesh_has_no_couplings() {
        let mm = build_multimesh(vec![background(4)], 4).unwrap();
        assert!(mm.cell_kinds(0).iter().all(|k| *k == CellKind::Uncut));
        assert_eq!(mm.interface_dbs().count(), 0);
        assert_eq!(mm.overlap_dbs().count(), 0);
        assert!(mm.cut_cells(0).is_empty());
        assert_abs_diff_eq!(mm.visible_area(0), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_invalid_input() {
        assert!(build_multimesh(vec![background(4)], 0).is_err());
        assert!(build_multimesh(vec![], 2).is_err());
        let touching =
            build_structured_mesh(2, &Placement::new(0.5, 0.0, [0.0, 0.25]).unwrap(), None)
                .unwrap();
        assert!(build_multimesh(vec![background(4), touching], 2).is_err());
        assert!(build_multimesh(vec![square(2, 0.5, 0.0, [0.5, 0.5])], 2).is_err());
    }

    #[test]
    fn aligned_square_partitions_the_unit_square() {
        let mm = build_multimesh(vec![background(8), square(4, 0.5, 0.0, [0.5, 0.5])], 4).unwrap();
        let a0 = mm.visible_area(0);
        let a1 = mm.visible_area(1);
        assert_abs_diff_eq!(a1, 0.25, epsilon = 1e-10);
        assert_abs_diff_eq!(a0 + a1, 1.0, epsilon = 1e-10);
        let len: f64 = mm.interface_db(1, 0).iter().map(|q| q.weight).sum();
        assert_abs_diff_eq!(len, 2.0, epsilon = 1e-10);
        // the square sits on grid lines: no cut cells
        assert!(mm.cut_cells(0).is_empty());
        assert_eq!(mm.active_cells(0).len(), 128 - 32);
    }

    #[test]
    fn rotated_square_partition_and_interface() {
        let mm =
            build_multimesh(vec![background(8), square(3, 0.4, 0.3, [0.45, 0.55])], 4).unwrap();
        assert_abs_diff_eq!(
            mm.visible_area(0) + mm.visible_area(1),
            1.0,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(mm.visible_area(1), 0.16, epsilon = 1e-10);
        let len: f64 = mm.interface_db(1, 0).iter().map(|q| q.weight).sum();
        assert_abs_diff_eq!(len, 1.6, epsilon = 1e-10);
        let o: f64 = mm.overlap_db(0, 1).iter().map(|q| q.weight).sum();
        let cut_area: f64 = mm
            .cut_cells(0)
            .iter()
            .map(|&c| triangle_area(&mm.mesh(0).cell_triangle(c)))
            .sum();
        let cut_visible: f64 = mm
            .cut_cells(0)
            .iter()
            .map(|&c| {
                mm.cut_quadrature(0, c)
                    .iter()
                    .map(|q| q.weight)
                    .sum::<f64>()
            })
            .sum();
        assert_abs_diff_eq!(o, cut_area - cut_visible, epsilon = 1e-10);
        for q in mm.interface_db(1, 0) {
            assert_abs_diff_eq!(q.normal.norm(), 1.0, epsilon = 1e-12);
            assert!(!mm.domain(1).contains(&(q.point + q.normal * 1e-8), 0.0));
            assert!(mm
                .domain(1)
                .contains_strictly(&(q.point - q.normal * 1e-8), 0.0));
        }
    }

    #[test]
    fn three_stacked_meshes() {
        let meshes = vec![
            background(8),
            square(4, 0.4, 0.2, [0.4, 0.4]),
            square(4, 0.3, 0.5, [0.6, 0.55]),
        ];
        let mm = build_multimesh(meshes, 4).unwrap();
        let g20: f64 = mm.interface_db(2, 0).iter().map(|q| q.weight).sum();
        let g21: f64 = mm.interface_db(2, 1).iter().map(|q| q.weight).sum();
        assert!(g20 > 0.0 && g21 > 0.0);
        assert_abs_diff_eq!(g20 + g21, 1.2, epsilon = 1e-10);
        let total: f64 = (0..3).map(|i| mm.visible_area(i)).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        // every cut cell splits into its visible part and overlap pieces
        for i in 0..3 {
            for c in mm.cut_cells(i) {
                let visible: f64 = mm.cut_quadrature(i, c).iter().map(|q| q.weight).sum();
                let covered: f64 = (i + 1..3)
                    .flat_map(|j| mm.overlap_db(i, j))
                    .filter(|q| q.cell_i == c)
                    .map(|q| q.weight)
                    .sum();
                let area = triangle_area(&mm.mesh(i).cell_triangle(c));
                assert_abs_diff_eq!(visible + covered, area, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn hidden_mesh_is_detected() {
        let meshes = vec![
            background(8),
            square(2, 0.2, 0.1, [0.5, 0.5]),
            square(4, 0.5, 0.0, [0.5, 0.5]),
        ];
        let mm = build_multimesh(meshes, 2).unwrap();
        assert_eq!(mm.hidden_meshes(), &[1]);
        assert!(mm.active_cells(1).is_empty());
        assert!(mm.cut_cells(1).is_empty());
        assert!(mm.interface_db(1, 0).is_empty());
        assert!(mm.overlap_db(0, 1).is_empty());
        assert!(mm.overlap_db(1, 2).is_empty());
    }

    #[test]
    fn cut_cells_meet_the_interface() {
        let mm = build_multimesh(vec![background(8), square(4, 0.5, 0.4, [0.5, 0.5])], 4).unwrap();
        let boundary = crate::mesh::boundary_polygon(mm.mesh(1)).unwrap();
        let cut = mm.cut_cells(0);
        assert!(!cut.is_empty());
        for c in cut {
            let tri = ConvexPolygon::triangle(&mm.mesh(0).cell_triangle(c));
            let hit = (0..boundary.len()).any(|e| {
                let seg = Segment::new(boundary[e], boundary[(e + 1) % boundary.len()]);
                crate::geometry::clip_segment(&seg, &tri).is_some()
            });
            assert!(hit, "cut cell {c} does not meet the interface");
        }
    }

    #[test]
    fn quadrature_dump_has_header() {
        let mm = build_multimesh(vec![background(4), square(2, 0.4, 0.3, [0.5, 0.5])], 2).unwrap();
        let mut buf = Vec::new();
        mm.write_quadrature_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("measure,i,j,x,y,weight,cell_a,cell_b,nx,ny\n"));
        assert!(text.contains("\ndI,1,0,"));
        assert!(text.contains("\ndO,0,1,"));
    }
}

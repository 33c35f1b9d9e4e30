//! Lagrange reference elements, affine cell maps and the direct-sum
//! Taylor–Hood space over all active meshes.

use std::collections::HashMap;

use nalgebra::{DMatrix, Matrix2};

use crate::multimesh::MultiMesh;
use crate::{Error, Point, Result, Vector};

/// Continuous Lagrange element of degree `k` on the reference triangle
/// `(0,0), (1,0), (0,1)` with equispaced nodes.
///
/// Local node order: the three vertices, then `k - 1` nodes on each edge
/// `0→1`, `1→2`, `2→0` (listed from the edge's first vertex), then the
/// interior nodes.
#[derive(Clone, Debug)]
pub struct ReferenceElement {
    degree: usize,
    nodes: Vec<[f64; 2]>,
    exponents: Vec<(i32, i32)>,
    /// `coeffs[(m, a)]`: coefficient of monomial `m` in basis function `a`.
    coeffs: DMatrix<f64>,
}

/// Basis values and derivatives at one point. Hessians are stored as
/// `[xx, xy, yy]`.
#[derive(Clone, Debug, Default)]
pub struct BasisEval {
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 2]>,
    pub hessians: Vec<[f64; 3]>,
}

impl ReferenceElement {
    pub const MAX_DEGREE: usize = 4;

    pub fn new(degree: usize) -> Result<Self> {
        if degree == 0 || degree > Self::MAX_DEGREE {
            return Err(Error::UnsupportedDegree(degree, "1..=4"));
        }
        let k = degree;
        let kf = k as f64;
        let mut nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let corners = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        for e in 0..3 {
            let (a, b) = (corners[e], corners[(e + 1) % 3]);
            for l in 1..k {
                let t = l as f64 / kf;
                nodes.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            }
        }
        for j in 1..k {
            for i in 1..k - j {
                nodes.push([i as f64 / kf, j as f64 / kf]);
            }
        }
        let mut exponents = Vec::new();
        for total in 0..=k as i32 {
            for q in 0..=total {
                exponents.push((total - q, q));
            }
        }
        let n = nodes.len();
        debug_assert_eq!(n, exponents.len());
        let vandermonde = DMatrix::from_fn(n, n, |r, m| {
            let (p, q) = exponents[m];
            nodes[r][0].powi(p) * nodes[r][1].powi(q)
        });
        let coeffs = vandermonde
            .try_inverse()
            .expect("Lagrange Vandermonde matrix is invertible");
        Ok(ReferenceElement {
            degree,
            nodes,
            exponents,
            coeffs,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    /// Number of nodes interior to each edge.
    pub fn nodes_per_edge(&self) -> usize {
        self.degree - 1
    }

    pub fn eval(&self, xi: [f64; 2]) -> BasisEval {
        let n = self.dim();
        let k = self.degree as i32;
        let pow = |x: f64| -> Vec<f64> {
            let mut out = vec![1.0; (k + 1) as usize];
            for i in 1..=k as usize {
                out[i] = out[i - 1] * x;
            }
            out
        };
        let (px, py) = (pow(xi[0]), pow(xi[1]));
        let pw = |v: &[f64], e: i32| if e < 0 { 0.0 } else { v[e as usize] };
        let mut mono = vec![[0.0; 6]; n];
        for (m, &(p, q)) in self.exponents.iter().enumerate() {
            let (pf, qf) = (p as f64, q as f64);
            mono[m] = [
                pw(&px, p) * pw(&py, q),
                pf * pw(&px, p - 1) * pw(&py, q),
                qf * pw(&px, p) * pw(&py, q - 1),
                pf * (pf - 1.0) * pw(&px, p - 2) * pw(&py, q),
                pf * qf * pw(&px, p - 1) * pw(&py, q - 1),
                qf * (qf - 1.0) * pw(&px, p) * pw(&py, q - 2),
            ];
        }
        let mut out = BasisEval {
            values: vec![0.0; n],
            gradients: vec![[0.0; 2]; n],
            hessians: vec![[0.0; 3]; n],
        };
        for a in 0..n {
            let mut acc = [0.0; 6];
            for (m, mv) in mono.iter().enumerate() {
                let c = self.coeffs[(m, a)];
                for d in 0..6 {
                    acc[d] += c * mv[d];
                }
            }
            out.values[a] = acc[0];
            out.gradients[a] = [acc[1], acc[2]];
            out.hessians[a] = [acc[3], acc[4], acc[5]];
        }
        out
    }
}

/// Affine map from the reference triangle onto a physical cell.
#[derive(Clone, Copy, Debug)]
pub struct AffineMap {
    origin: Point,
    jacobian: Matrix2<f64>,
    inverse: Matrix2<f64>,
}

impl AffineMap {
    pub fn new(tri: &[Point; 3]) -> Self {
        let jacobian = Matrix2::from_columns(&[tri[1] - tri[0], tri[2] - tri[0]]);
        let inverse = jacobian.try_inverse().expect("non-degenerate cell");
        AffineMap {
            origin: tri[0],
            jacobian,
            inverse,
        }
    }

    pub fn to_reference(&self, x: &Point) -> [f64; 2] {
        let xi = self.inverse * (x - self.origin);
        [xi.x, xi.y]
    }

    pub fn to_physical(&self, xi: [f64; 2]) -> Point {
        self.origin + self.jacobian * Vector::new(xi[0], xi[1])
    }

    pub fn det(&self) -> f64 {
        self.jacobian.determinant()
    }

    /// Pushes reference derivatives forward to physical ones.
    pub fn push_forward(&self, reference: &BasisEval) -> PhysicalBasis {
        let inv_t = self.inverse.transpose();
        let gradients = reference
            .gradients
            .iter()
            .map(|g| inv_t * Vector::new(g[0], g[1]))
            .collect();
        let hessians: Vec<Matrix2<f64>> = reference
            .hessians
            .iter()
            .map(|h| inv_t * Matrix2::new(h[0], h[1], h[1], h[2]) * self.inverse)
            .collect();
        PhysicalBasis {
            values: reference.values.clone(),
            gradients,
            laplacians: hessians.iter().map(|h| h.trace()).collect(),
            hessians,
        }
    }
}

/// Basis values and physical derivatives at one point.
#[derive(Clone, Debug)]
pub struct PhysicalBasis {
    pub values: Vec<f64>,
    pub gradients: Vec<Vector>,
    pub hessians: Vec<Matrix2<f64>>,
    pub laplacians: Vec<f64>,
}

impl PhysicalBasis {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Lagrange node numbering of one scalar field over the active cells of one
/// mesh.
#[derive(Clone, Debug, Default)]
pub struct MeshNodes {
    /// Local-to-mesh node map per cell; empty for inactive cells.
    cell_nodes: Vec<Vec<usize>>,
    coordinates: Vec<Point>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum NodeKey {
    Vertex(usize),
    /// `(low vertex, high vertex, position counted from the low vertex)`
    Edge(usize, usize, usize),
    Interior(usize, usize),
}

impl MeshNodes {
    fn build(mm: &MultiMesh, mesh: usize, element: &ReferenceElement) -> Self {
        let premesh = mm.mesh(mesh);
        let k = element.degree();
        let per_edge = element.nodes_per_edge();
        let mut index: HashMap<NodeKey, usize> = HashMap::new();
        let mut coordinates = Vec::new();
        let mut cell_nodes = vec![Vec::new(); premesh.num_cells()];
        for &c in mm.active_cells(mesh) {
            let verts = premesh.cells()[c];
            let map = AffineMap::new(&premesh.cell_triangle(c));
            let mut local = Vec::with_capacity(element.dim());
            for (l, node) in element.nodes().iter().enumerate() {
                let key = if l < 3 {
                    NodeKey::Vertex(verts[l])
                } else if l < 3 + 3 * per_edge {
                    let e = (l - 3) / per_edge;
                    let pos = (l - 3) % per_edge + 1;
                    let (a, b) = (verts[e], verts[(e + 1) % 3]);
                    if a < b {
                        NodeKey::Edge(a, b, pos)
                    } else {
                        NodeKey::Edge(b, a, k - pos)
                    }
                } else {
                    NodeKey::Interior(c, l)
                };
                let next = coordinates.len();
                let id = *index.entry(key).or_insert_with(|| {
                    coordinates.push(map.to_physical(*node));
                    next
                });
                local.push(id);
            }
            cell_nodes[c] = local;
        }
        MeshNodes {
            cell_nodes,
            coordinates,
        }
    }

    pub fn len(&self) -> usize {
        self.coordinates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coordinates.is_empty()
    }

    pub fn coordinates(&self) -> &[Point] {
        &self.coordinates
    }

    pub fn cell(&self, cell: usize) -> &[usize] {
        &self.cell_nodes[cell]
    }
}

/// Value of a discrete velocity–pressure pair at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldValue {
    pub velocity: Vector,
    /// Row `c` is the gradient of velocity component `c`.
    pub velocity_gradient: Matrix2<f64>,
    pub pressure: f64,
    pub pressure_gradient: Vector,
}

/// Direct sum of per-mesh P_k/P_{k-1} Taylor–Hood spaces.
///
/// Global layout: the velocity blocks of meshes `0..=N` (each block is all
/// x-components followed by all y-components), then the pressure blocks,
/// then one slot for the mean-pressure multiplier.
pub struct FunctionSpace<'a> {
    mm: &'a MultiMesh,
    velocity_element: ReferenceElement,
    pressure_element: ReferenceElement,
    velocity: Vec<MeshNodes>,
    pressure: Vec<MeshNodes>,
    velocity_offsets: Vec<usize>,
    pressure_offsets: Vec<usize>,
    n_u: usize,
    n_p: usize,
}

/// Builds the P_k/P_{k-1} space, `k ∈ {2, 3, 4}`.
pub fn build_space(mm: &MultiMesh, k: usize) -> Result<FunctionSpace<'_>> {
    FunctionSpace::new(mm, k)
}

impl<'a> FunctionSpace<'a> {
    pub fn new(mm: &'a MultiMesh, k: usize) -> Result<Self> {
        if !(2..=ReferenceElement::MAX_DEGREE).contains(&k) {
            return Err(Error::UnsupportedDegree(k, "2..=4 for Taylor-Hood"));
        }
        let velocity_element = ReferenceElement::new(k)?;
        let pressure_element = ReferenceElement::new(k - 1)?;
        let n = mm.num_meshes();
        let velocity: Vec<MeshNodes> = (0..n)
            .map(|i| MeshNodes::build(mm, i, &velocity_element))
            .collect();
        let pressure: Vec<MeshNodes> = (0..n)
            .map(|i| MeshNodes::build(mm, i, &pressure_element))
            .collect();
        let mut velocity_offsets = Vec::with_capacity(n);
        let mut offset = 0;
        for nodes in &velocity {
            velocity_offsets.push(offset);
            offset += 2 * nodes.len();
        }
        let n_u = offset;
        let mut pressure_offsets = Vec::with_capacity(n);
        for nodes in &pressure {
            pressure_offsets.push(offset);
            offset += nodes.len();
        }
        let n_p = offset - n_u;
        Ok(FunctionSpace {
            mm,
            velocity_element,
            pressure_element,
            velocity,
            pressure,
            velocity_offsets,
            pressure_offsets,
            n_u,
            n_p,
        })
    }

    pub fn multimesh(&self) -> &'a MultiMesh {
        self.mm
    }

    pub fn degree(&self) -> usize {
        self.velocity_element.degree()
    }

    pub fn velocity_element(&self) -> &ReferenceElement {
        &self.velocity_element
    }

    pub fn pressure_element(&self) -> &ReferenceElement {
        &self.pressure_element
    }

    pub fn velocity_nodes(&self, mesh: usize) -> &MeshNodes {
        &self.velocity[mesh]
    }

    pub fn pressure_nodes(&self, mesh: usize) -> &MeshNodes {
        &self.pressure[mesh]
    }

    /// Total number of velocity unknowns (both components, all meshes).
    pub fn num_velocity_dofs(&self) -> usize {
        self.n_u
    }

    pub fn num_pressure_dofs(&self) -> usize {
        self.n_p
    }

    /// Velocity plus pressure unknowns, without the multiplier.
    pub fn num_dofs(&self) -> usize {
        self.n_u + self.n_p
    }

    /// Size of the saddle-point system (unknowns plus the multiplier).
    pub fn system_size(&self) -> usize {
        self.n_u + self.n_p + 1
    }

    pub fn multiplier_index(&self) -> usize {
        self.n_u + self.n_p
    }

    /// Unknowns owned by mesh `i` (velocity and pressure).
    pub fn mesh_dofs(&self, mesh: usize) -> usize {
        2 * self.velocity[mesh].len() + self.pressure[mesh].len()
    }

    /// Global velocity index range of mesh `i`.
    pub fn velocity_range(&self, mesh: usize) -> std::ops::Range<usize> {
        let start = self.velocity_offsets[mesh];
        start..start + 2 * self.velocity[mesh].len()
    }

    /// Global pressure index range of mesh `i`.
    pub fn pressure_range(&self, mesh: usize) -> std::ops::Range<usize> {
        let start = self.pressure_offsets[mesh];
        start..start + self.pressure[mesh].len()
    }

    pub fn velocity_dof(&self, mesh: usize, component: usize, node: usize) -> usize {
        self.velocity_offsets[mesh] + component * self.velocity[mesh].len() + node
    }

    pub fn pressure_dof(&self, mesh: usize, node: usize) -> usize {
        self.pressure_offsets[mesh] + node
    }

    /// Global velocity indices of a cell: all x-components, then all y-components.
    pub fn cell_velocity_dofs(&self, mesh: usize, cell: usize) -> Vec<usize> {
        let nodes = self.velocity[mesh].cell(cell);
        (0..2)
            .flat_map(|c| nodes.iter().map(move |&n| self.velocity_dof(mesh, c, n)))
            .collect()
    }

    pub fn cell_pressure_dofs(&self, mesh: usize, cell: usize) -> Vec<usize> {
        self.pressure[mesh]
            .cell(cell)
            .iter()
            .map(|&n| self.pressure_dof(mesh, n))
            .collect()
    }

    /// Which mesh owns a global index (`None` for the multiplier).
    pub fn owner_of(&self, dof: usize) -> Option<usize> {
        let n = self.mm.num_meshes();
        (0..n).find(|&i| {
            self.velocity_range(i).contains(&dof) || self.pressure_range(i).contains(&dof)
        })
    }

    pub fn cell_map(&self, mesh: usize, cell: usize) -> AffineMap {
        AffineMap::new(&self.mm.mesh(mesh).cell_triangle(cell))
    }

    /// Velocity and pressure bases of a cell evaluated at a physical point
    /// (the point may lie anywhere; polynomials are extended).
    pub fn basis_at(&self, mesh: usize, cell: usize, x: &Point) -> (PhysicalBasis, PhysicalBasis) {
        let map = self.cell_map(mesh, cell);
        let xi = map.to_reference(x);
        (
            map.push_forward(&self.velocity_element.eval(xi)),
            map.push_forward(&self.pressure_element.eval(xi)),
        )
    }

    /// Nodal interpolant of a velocity–pressure pair (multiplier slot 0).
    pub fn interpolate(
        &self,
        velocity: impl Fn(&Point) -> Vector,
        pressure: impl Fn(&Point) -> f64,
    ) -> Vec<f64> {
        let mut out = vec![0.0; self.system_size()];
        for i in 0..self.mm.num_meshes() {
            for (n, x) in self.velocity[i].coordinates().iter().enumerate() {
                let u = velocity(x);
                out[self.velocity_dof(i, 0, n)] = u.x;
                out[self.velocity_dof(i, 1, n)] = u.y;
            }
            for (n, x) in self.pressure[i].coordinates().iter().enumerate() {
                out[self.pressure_dof(i, n)] = pressure(x);
            }
        }
        out
    }

    /// Evaluates mesh `i`'s component of a discrete field on `cell` at `x`.
    pub fn eval_field(
        &self,
        coefficients: &[f64],
        mesh: usize,
        cell: usize,
        x: &Point,
    ) -> Result<FieldValue> {
        if mesh >= self.mm.num_meshes() || !self.mm.is_active(mesh, cell) {
            return Err(Error::CellMismatch { mesh, cell });
        }
        let (vb, pb) = self.basis_at(mesh, cell, x);
        Ok(self.combine(coefficients, mesh, cell, &vb, &pb))
    }

    /// Combines pre-evaluated bases with coefficients.
    pub fn combine(
        &self,
        coefficients: &[f64],
        mesh: usize,
        cell: usize,
        vb: &PhysicalBasis,
        pb: &PhysicalBasis,
    ) -> FieldValue {
        let mut velocity = Vector::zeros();
        let mut velocity_gradient = Matrix2::zeros();
        for (a, &node) in self.velocity[mesh].cell(cell).iter().enumerate() {
            for c in 0..2 {
                let coef = coefficients[self.velocity_dof(mesh, c, node)];
                velocity[c] += coef * vb.values[a];
                velocity_gradient[(c, 0)] += coef * vb.gradients[a].x;
                velocity_gradient[(c, 1)] += coef * vb.gradients[a].y;
            }
        }
        let mut pressure = 0.0;
        let mut pressure_gradient = Vector::zeros();
        for (a, &node) in self.pressure[mesh].cell(cell).iter().enumerate() {
            let coef = coefficients[self.pressure_dof(mesh, node)];
            pressure += coef * pb.values[a];
            pressure_gradient += coef * pb.gradients[a];
        }
        FieldValue {
            velocity,
            velocity_gradient,
            pressure,
            pressure_gradient,
        }
    }
}

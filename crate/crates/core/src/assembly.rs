//! Assembly of the multimesh Stokes saddle-point system.
//!
//! The discrete problem couples the per-mesh Taylor–Hood spaces through
//! Nitsche terms on the interfaces Γ_ij (i > j), a jump stabilization on the
//! overlaps O_ij (i < j) and a least-squares residual on the cut cells.
//! Matrix rows are test functions and columns are trial functions.

use serde::{Deserialize, Serialize};

use crate::fem::{BasisEval, FunctionSpace, PhysicalBasis};
use crate::multimesh::{CellKind, MultiMesh};
use crate::quadrature::TriangleRule;
use crate::solver::SparseMatrix;
use crate::{Error, Point, Result, Vector};

/// Overlap stabilization variant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stabilization {
    /// `β₁ ([Du], [Dv])` on the overlaps.
    #[default]
    Grad,
    /// `β₂ h⁻² ([u], [v])` on the overlaps.
    L2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormParameters {
    /// Nitsche penalty.
    pub beta0: f64,
    /// Gradient-jump overlap weight.
    pub beta1: f64,
    /// Value-jump overlap weight.
    pub beta2: f64,
    /// Least-squares weight on cut cells.
    pub delta: f64,
    pub stabilization: Stabilization,
    /// Weight of the higher mesh in interface averages; the lower mesh gets
    /// `1 - average_weight`.
    pub average_weight: f64,
    /// Use `2 / (1/h_i + 1/h_j)` per pair (and `h_i` per mesh) instead of the
    /// global mesh size.
    pub per_pair_h: bool,
    /// Overrides the global mesh size; `None` uses the largest `h` over the
    /// non-hidden meshes.
    pub h: Option<f64>,
}

impl Default for FormParameters {
    fn default() -> Self {
        FormParameters {
            beta0: 100.0,
            beta1: 1.0,
            beta2: 1.0,
            delta: 0.1,
            stabilization: Stabilization::Grad,
            average_weight: 0.5,
            per_pair_h: false,
            h: None,
        }
    }
}

impl FormParameters {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if !(self.beta0 > 0.0 && self.beta0.is_finite()) {
            return bad("beta0 must be positive");
        }
        if !(self.beta1 >= 0.0 && self.beta1.is_finite())
            || !(self.beta2 >= 0.0 && self.beta2.is_finite())
        {
            return bad("beta1 and beta2 must be non-negative");
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return bad("delta must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.average_weight) {
            return bad("average_weight must lie in [0, 1]");
        }
        if let Some(h) = self.h {
            if !(h > 0.0 && h.is_finite()) {
                return bad("h must be positive");
            }
        }
        Ok(())
    }

    /// Global mesh size used by the forms.
    pub fn global_h(&self, mm: &MultiMesh) -> f64 {
        self.h.unwrap_or_else(|| mm.global_h())
    }

    fn pair_h(&self, mm: &MultiMesh, i: usize, j: usize) -> f64 {
        if self.per_pair_h {
            2.0 / (1.0 / mm.mesh(i).h() + 1.0 / mm.mesh(j).h())
        } else {
            self.global_h(mm)
        }
    }

    fn mesh_h(&self, mm: &MultiMesh, i: usize) -> f64 {
        if self.per_pair_h {
            mm.mesh(i).h()
        } else {
            self.global_h(mm)
        }
    }
}

/// Unassembled matrix entries and right-hand side of one or more forms.
#[derive(Clone, Debug, Default)]
pub struct Contributions {
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
}

impl Contributions {
    fn new(n: usize) -> Self {
        Contributions {
            triplets: Vec::new(),
            rhs: vec![0.0; n],
        }
    }

    pub fn extend(&mut self, other: Contributions) {
        self.triplets.extend(other.triplets);
        for (a, b) in self.rhs.iter_mut().zip(other.rhs) {
            *a += b;
        }
    }

    pub fn to_matrix(&self) -> SparseMatrix {
        let n = self.rhs.len();
        SparseMatrix::from_triplets(n, n, &self.triplets).expect("assembled indices are in range")
    }
}

/// Dense element matrix over a list of global indices.
struct Local {
    dofs: Vec<usize>,
    mat: Vec<f64>,
    rhs: Vec<f64>,
}

impl Local {
    fn new(dofs: Vec<usize>) -> Self {
        let n = dofs.len();
        Local {
            dofs,
            mat: vec![0.0; n * n],
            rhs: vec![0.0; n],
        }
    }

    #[inline]
    fn add(&mut self, row: usize, col: usize, v: f64) {
        let n = self.dofs.len();
        self.mat[row * n + col] += v;
    }

    fn flush(&self, out: &mut Contributions) {
        let n = self.dofs.len();
        for (r, &gr) in self.dofs.iter().enumerate() {
            for (c, &gc) in self.dofs.iter().enumerate() {
                let v = self.mat[r * n + c];
                if v != 0.0 {
                    out.triplets.push((gr, gc, v));
                }
            }
            out.rhs[gr] += self.rhs[r];
        }
    }
}

/// Global indices of a cell: velocity (x then y), then pressure.
fn cell_dofs(space: &FunctionSpace, mesh: usize, cell: usize) -> Vec<usize> {
    let mut dofs = space.cell_velocity_dofs(mesh, cell);
    dofs.extend(space.cell_pressure_dofs(mesh, cell));
    dofs
}

/// Velocity and pressure bases at one reference point.
type ReferenceTable = (BasisEval, BasisEval);

struct Evaluated {
    weight: f64,
    point: Point,
    v: PhysicalBasis,
    p: PhysicalBasis,
}

/// Basis evaluations at the `dX` points of a cell.
fn dx_points(
    space: &FunctionSpace,
    rule: &TriangleRule,
    reference: &[ReferenceTable],
    i: usize,
    c: usize,
) -> Vec<Evaluated> {
    let mm = space.multimesh();
    let map = space.cell_map(i, c);
    match mm.cell_kind(i, c) {
        CellKind::Uncut => rule
            .map(&mm.mesh(i).cell_triangle(c))
            .zip(reference)
            .map(|(q, (rv, rp))| Evaluated {
                weight: q.weight,
                point: q.point,
                v: map.push_forward(rv),
                p: map.push_forward(rp),
            })
            .collect(),
        CellKind::Cut => mm
            .cut_quadrature(i, c)
            .iter()
            .map(|q| {
                let (v, p) = space.basis_at(i, c, &q.point);
                Evaluated {
                    weight: q.weight,
                    point: q.point,
                    v,
                    p,
                }
            })
            .collect(),
        CellKind::Covered => Vec::new(),
    }
}

/// Basis evaluations at full-cell points (the `dC` measure).
fn dc_points(
    space: &FunctionSpace,
    rule: &TriangleRule,
    reference: &[ReferenceTable],
    i: usize,
    c: usize,
) -> Vec<Evaluated> {
    let map = space.cell_map(i, c);
    rule.map(&space.multimesh().mesh(i).cell_triangle(c))
        .zip(reference)
        .map(|(q, (rv, rp))| Evaluated {
            weight: q.weight,
            point: q.point,
            v: map.push_forward(rv),
            p: map.push_forward(rp),
        })
        .collect()
}

fn reference_tables(space: &FunctionSpace, rule: &TriangleRule) -> Vec<ReferenceTable> {
    rule.points
        .iter()
        .map(|&xi| {
            (
                space.velocity_element().eval(xi),
                space.pressure_element().eval(xi),
            )
        })
        .collect()
}

/// `Σ_i (Du_i, Dv_i)_{Ω_i} − (div u_i, q_i)_{Ω_i} − (div v_i, p_i)_{Ω_i}`
/// and `Σ_i (f, v_i)_{Ω_i}`.
pub fn assemble_volume(space: &FunctionSpace, f: &dyn Fn(&Point) -> Vector) -> Contributions {
    let mm = space.multimesh();
    let mut out = Contributions::new(space.system_size());
    let nv = space.velocity_element().dim();
    let np = space.pressure_element().dim();
    let rule = TriangleRule::new(mm.quad_order());
    let reference = reference_tables(space, &rule);
    for i in 0..mm.num_meshes() {
        for &c in mm.active_cells(i) {
            let mut local = Local::new(cell_dofs(space, i, c));
            for q in dx_points(space, &rule, &reference, i, c) {
                let w = q.weight;
                let fx = f(&q.point);
                for a in 0..nv {
                    let ga = q.v.gradients[a];
                    for b in 0..nv {
                        let val = w * ga.dot(&q.v.gradients[b]);
                        local.add(a, b, val);
                        local.add(nv + a, nv + b, val);
                    }
                    for comp in 0..2 {
                        local.rhs[comp * nv + a] += w * fx[comp] * q.v.values[a];
                        for b in 0..np {
                            let val = -w * ga[comp] * q.p.values[b];
                            local.add(comp * nv + a, 2 * nv + b, val);
                            local.add(2 * nv + b, comp * nv + a, val);
                        }
                    }
                }
            }
            local.flush(&mut out);
        }
    }
    out
}

/// One side of a two-mesh coupling at a point.
struct Side {
    sign: f64,
    average: f64,
    v: PhysicalBasis,
    p: PhysicalBasis,
}

/// Groups consecutive points sharing the same cell pair into one element
/// matrix.
struct PairAccumulator<'s, 'a> {
    space: &'s FunctionSpace<'a>,
    meshes: (usize, usize),
    cells: Option<(usize, usize)>,
    local: Option<Local>,
}

impl<'s, 'a> PairAccumulator<'s, 'a> {
    fn new(space: &'s FunctionSpace<'a>, meshes: (usize, usize)) -> Self {
        PairAccumulator {
            space,
            meshes,
            cells: None,
            local: None,
        }
    }

    fn local_for(&mut self, cells: (usize, usize), out: &mut Contributions) -> &mut Local {
        if self.cells != Some(cells) {
            if let Some(l) = self.local.take() {
                l.flush(out);
            }
            let mut dofs = cell_dofs(self.space, self.meshes.0, cells.0);
            dofs.extend(cell_dofs(self.space, self.meshes.1, cells.1));
            self.local = Some(Local::new(dofs));
            self.cells = Some(cells);
        }
        self.local.as_mut().expect("local matrix initialized")
    }

    fn finish(self, out: &mut Contributions) {
        if let Some(l) = self.local {
            l.flush(out);
        }
    }
}

/// Nitsche coupling on every Γ_ij:
/// `−(⟨Du·n⟩, [v]) − ([u], ⟨Dv·n⟩) + β₀/h ([u], [v]) + ([n·u], ⟨q⟩) + ([n·v], ⟨p⟩)`.
pub fn assemble_interface(space: &FunctionSpace, params: &FormParameters) -> Contributions {
    let mm = space.multimesh();
    let mut out = Contributions::new(space.system_size());
    let nv = space.velocity_element().dim();
    let np = space.pressure_element().dim();
    let block = 2 * nv + np;
    let omega = params.average_weight;
    for (&(i, j), points) in mm.interface_dbs() {
        let penalty = params.beta0 / params.pair_h(mm, i, j);
        let mut acc = PairAccumulator::new(space, (i, j));
        for q in points {
            let n = q.normal;
            let sides = {
                let (vi, pi) = space.basis_at(i, q.cell_hi, &q.point);
                let (vj, pj) = space.basis_at(j, q.cell_lo, &q.point);
                [
                    Side {
                        sign: 1.0,
                        average: omega,
                        v: vi,
                        p: pi,
                    },
                    Side {
                        sign: -1.0,
                        average: 1.0 - omega,
                        v: vj,
                        p: pj,
                    },
                ]
            };
            let dn: Vec<Vec<f64>> = sides
                .iter()
                .map(|s| s.v.gradients.iter().map(|g| g.dot(&n)).collect())
                .collect();
            let local = acc.local_for((q.cell_hi, q.cell_lo), &mut out);
            let w = q.weight;
            for (si, s) in sides.iter().enumerate() {
                for (ti, t) in sides.iter().enumerate() {
                    let (os, ot) = (si * block, ti * block);
                    for a in 0..nv {
                        let (phi_a, dn_a) = (s.v.values[a], dn[si][a]);
                        for (b, (&phi_b, &dn_b)) in t.v.values.iter().zip(&dn[ti]).enumerate() {
                            let val = w
                                * (-s.sign * phi_a * t.average * dn_b
                                    - s.average * dn_a * t.sign * phi_b
                                    + penalty * s.sign * t.sign * phi_a * phi_b);
                            local.add(os + a, ot + b, val);
                            local.add(os + nv + a, ot + nv + b, val);
                        }
                        for b in 0..np {
                            let coupling = w * s.sign * phi_a * t.average * t.p.values[b];
                            for comp in 0..2 {
                                let val = coupling * n[comp];
                                // ([n·v], ⟨p⟩) and its transpose ([n·u], ⟨q⟩)
                                local.add(os + comp * nv + a, ot + 2 * nv + b, val);
                                local.add(ot + 2 * nv + b, os + comp * nv + a, val);
                            }
                        }
                    }
                }
            }
        }
        acc.finish(&mut out);
    }
    out
}

/// Overlap stabilization on every O_ij: `β₁ ([Du], [Dv])` or
/// `β₂ h⁻² ([u], [v])`.
pub fn assemble_overlap_stabilization(
    space: &FunctionSpace,
    params: &FormParameters,
) -> Contributions {
    let mm = space.multimesh();
    let mut out = Contributions::new(space.system_size());
    let nv = space.velocity_element().dim();
    let np = space.pressure_element().dim();
    let block = 2 * nv + np;
    for (&(i, j), points) in mm.overlap_dbs() {
        let h = params.pair_h(mm, i, j);
        let mut acc = PairAccumulator::new(space, (i, j));
        for q in points {
            let (vi, _) = space.basis_at(i, q.cell_i, &q.point);
            let (vj, _) = space.basis_at(j, q.cell_j, &q.point);
            let sides = [(1.0, vi), (-1.0, vj)];
            let local = acc.local_for((q.cell_i, q.cell_j), &mut out);
            for (si, (ss, sv)) in sides.iter().enumerate() {
                for (ti, (ts, tv)) in sides.iter().enumerate() {
                    let scale = q.weight * ss * ts;
                    for a in 0..nv {
                        for b in 0..nv {
                            let val = match params.stabilization {
                                Stabilization::Grad => {
                                    params.beta1 * scale * sv.gradients[a].dot(&tv.gradients[b])
                                }
                                Stabilization::L2 => {
                                    params.beta2 / (h * h) * scale * sv.values[a] * tv.values[b]
                                }
                            };
                            local.add(si * block + a, ti * block + b, val);
                            local.add(si * block + nv + a, ti * block + nv + b, val);
                        }
                    }
                }
            }
        }
        acc.finish(&mut out);
    }
    out
}

/// Least-squares residual on cut cells,
/// `δ h² (Δu − ∇p, Δv + ∇q)` with right-hand side `−δ h² (f, Δv + ∇q)`.
pub fn assemble_least_squares(
    space: &FunctionSpace,
    params: &FormParameters,
    f: &dyn Fn(&Point) -> Vector,
) -> Contributions {
    let mm = space.multimesh();
    let mut out = Contributions::new(space.system_size());
    if params.delta == 0.0 {
        return out;
    }
    let nv = space.velocity_element().dim();
    let np = space.pressure_element().dim();
    let rule = TriangleRule::new(mm.quad_order());
    let reference = reference_tables(space, &rule);
    for i in 0..mm.num_meshes() {
        let h = params.mesh_h(mm, i);
        let scale = params.delta * h * h;
        for c in mm.cut_cells(i) {
            let mut local = Local::new(cell_dofs(space, i, c));
            for q in dc_points(space, &rule, &reference, i, c) {
                let w = scale * q.weight;
                let fx = f(&q.point);
                let lap = &q.v.laplacians;
                let gp = &q.p.gradients;
                for a in 0..nv {
                    for b in 0..nv {
                        let val = w * lap[a] * lap[b];
                        local.add(a, b, val);
                        local.add(nv + a, nv + b, val);
                    }
                    for comp in 0..2 {
                        local.rhs[comp * nv + a] -= w * fx[comp] * lap[a];
                        for (b, g) in gp.iter().enumerate() {
                            // (−∇p, Δv) and (Δu, ∇q)
                            local.add(comp * nv + a, 2 * nv + b, -w * lap[a] * g[comp]);
                            local.add(2 * nv + b, comp * nv + a, w * g[comp] * lap[a]);
                        }
                    }
                }
                for a in 0..np {
                    local.rhs[2 * nv + a] -= w * fx.dot(&gp[a]);
                    for b in 0..np {
                        local.add(2 * nv + a, 2 * nv + b, -w * gp[a].dot(&gp[b]));
                    }
                }
            }
            local.flush(&mut out);
        }
    }
    out
}

/// The assembled saddle-point system over velocity, pressure and the
/// mean-pressure multiplier.
#[derive(Clone, Debug)]
pub struct SaddleSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    /// Strongly constrained velocity indices, sorted.
    pub dirichlet: Vec<usize>,
    pub n_u: usize,
    pub n_p: usize,
    mean_constraint: bool,
}

impl SaddleSystem {
    pub fn size(&self) -> usize {
        self.n_u + self.n_p + 1
    }

    pub fn has_mean_constraint(&self) -> bool {
        self.mean_constraint
    }

    pub fn write_coordinate(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        self.matrix.write_coordinate(out)
    }
}

/// Sum of all forms, before boundary conditions and the pressure constraint.
pub fn assemble_forms(
    space: &FunctionSpace,
    params: &FormParameters,
    f: &dyn Fn(&Point) -> Vector,
) -> Result<SaddleSystem> {
    params.validate()?;
    let mut all = assemble_volume(space, f);
    all.extend(assemble_interface(space, params));
    all.extend(assemble_overlap_stabilization(space, params));
    all.extend(assemble_least_squares(space, params, f));
    Ok(SaddleSystem {
        matrix: all.to_matrix(),
        rhs: all.rhs,
        dirichlet: Vec::new(),
        n_u: space.num_velocity_dofs(),
        n_p: space.num_pressure_dofs(),
        mean_constraint: false,
    })
}

fn on_unit_square_boundary(x: &Point) -> bool {
    const TOL: f64 = 1e-12;
    x.x.abs() <= TOL || (x.x - 1.0).abs() <= TOL || x.y.abs() <= TOL || (x.y - 1.0).abs() <= TOL
}

/// Velocity indices of the background mesh on the boundary of the unit
/// square; fails if a placed mesh has a velocity node there.
pub fn boundary_dofs(space: &FunctionSpace) -> Result<Vec<(usize, Point)>> {
    let mm = space.multimesh();
    for i in 1..mm.num_meshes() {
        if let Some(node) = space
            .velocity_nodes(i)
            .coordinates()
            .iter()
            .position(on_unit_square_boundary)
        {
            return Err(Error::BoundaryDof { mesh: i, node });
        }
    }
    let mut out = Vec::new();
    for (node, x) in space.velocity_nodes(0).coordinates().iter().enumerate() {
        if on_unit_square_boundary(x) {
            out.push((space.velocity_dof(0, 0, node), *x));
            out.push((space.velocity_dof(0, 1, node), *x));
        }
    }
    out.sort_by_key(|(d, _)| *d);
    Ok(out)
}

/// Strong velocity boundary condition `u = g` with symmetric elimination:
/// constrained rows and columns become identity, known values move to the
/// right-hand side.
pub fn apply_dirichlet(
    system: &mut SaddleSystem,
    space: &FunctionSpace,
    g: &dyn Fn(&Point) -> Vector,
) -> Result<()> {
    let n = system.size();
    let mut value = vec![None; n];
    let nodes = boundary_dofs(space)?;
    for &(dof, x) in &nodes {
        let comp = usize::from(dof >= space.velocity_dof(0, 1, 0));
        value[dof] = Some(g(&x)[comp]);
    }
    let mut triplets = Vec::with_capacity(system.matrix.nnz());
    for (r, c, v) in system.matrix.iter() {
        match (value[r], value[c]) {
            (None, None) => triplets.push((r, c, v)),
            (None, Some(gc)) => system.rhs[r] -= v * gc,
            _ => {}
        }
    }
    for &(dof, _) in &nodes {
        triplets.push((dof, dof, 1.0));
        system.rhs[dof] = value[dof].expect("boundary value set");
    }
    system.matrix = SparseMatrix::from_triplets(n, n, &triplets)?;
    system.dirichlet = nodes.into_iter().map(|(d, _)| d).collect();
    Ok(())
}

/// `∫_{Ω_i} ψ` for every pressure basis function, indexed by global index
/// (zero outside the pressure block).
pub fn mean_pressure_weights(space: &FunctionSpace) -> Vec<f64> {
    let mm = space.multimesh();
    let mut out = vec![0.0; space.system_size()];
    let rule = TriangleRule::new(mm.quad_order());
    let reference = reference_tables(space, &rule);
    for i in 0..mm.num_meshes() {
        for &c in mm.active_cells(i) {
            let dofs = space.cell_pressure_dofs(i, c);
            for q in dx_points(space, &rule, &reference, i, c) {
                for (a, &d) in dofs.iter().enumerate() {
                    out[d] += q.weight * q.p.values[a];
                }
            }
        }
    }
    out
}

/// Adds the multiplier row and column enforcing `Σ_i ∫_{Ω_i} p_i = 0`.
pub fn apply_mean_pressure_constraint(
    system: &mut SaddleSystem,
    space: &FunctionSpace,
) -> Result<()> {
    if system.mean_constraint {
        return Ok(());
    }
    let n = system.size();
    let m = space.multiplier_index();
    let weights = mean_pressure_weights(space);
    let mut triplets: Vec<_> = system.matrix.iter().collect();
    for (d, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            triplets.push((m, d, w));
            triplets.push((d, m, w));
        }
    }
    system.matrix = SparseMatrix::from_triplets(n, n, &triplets)?;
    system.rhs[m] = 0.0;
    system.mean_constraint = true;
    Ok(())
}

/// Assembles all forms, imposes `u = g` on the outer boundary and adds the
/// mean-pressure constraint.
pub fn assemble_system(
    space: &FunctionSpace,
    params: &FormParameters,
    f: &dyn Fn(&Point) -> Vector,
    g: &dyn Fn(&Point) -> Vector,
) -> Result<SaddleSystem> {
    let mut system = assemble_forms(space, params, f)?;
    apply_dirichlet(&mut system, space, g)?;
    apply_mean_pressure_constraint(&mut system, space)?;
    Ok(system)
}

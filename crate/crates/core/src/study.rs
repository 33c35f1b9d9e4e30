//! Manufactured-solution convergence studies, the polynomial patch test and
//! the geometry conservation check.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_system, FormParameters};
use crate::fem::{build_space, FunctionSpace};
use crate::geometry::{triangle_area, Aabb};
use crate::mesh::{build_structured_mesh, random_placements, Placement, Premesh};
use crate::multimesh::{build_multimesh, CellKind, MultiMesh};
use crate::quadrature::TriangleRule;
use crate::solver::solve;
use crate::{Error, Point, Result, Vector};

use std::f64::consts::PI;

/// Errors below this are left out of rate fits.
pub const RATE_FLOOR: f64 = 1e-8;

/// Exact velocity and pressure of the manufactured solution.
pub fn exact_solution(x: f64, y: f64) -> (Vector, f64) {
    let (sx, sy) = ((PI * x).sin(), (PI * y).sin());
    let (cx, cy) = ((PI * x).cos(), (PI * y).cos());
    let amp = 2.0 * PI * sx * sy;
    let u = Vector::new(amp * cy * sx, -amp * cx * sy);
    let p = (2.0 * PI * x).sin() * (2.0 * PI * y).sin();
    (u, p)
}

pub fn exact_velocity(x: &Point) -> Vector {
    exact_solution(x.x, x.y).0
}

pub fn exact_pressure(x: &Point) -> f64 {
    exact_solution(x.x, x.y).1
}

/// Velocity gradient; row `c` is `∇u_c`.
pub fn exact_velocity_gradient(x: &Point) -> Matrix2<f64> {
    let (s2x, s2y) = ((2.0 * PI * x.x).sin(), (2.0 * PI * x.y).sin());
    let (c2x, c2y) = ((2.0 * PI * x.x).cos(), (2.0 * PI * x.y).cos());
    let pi2 = PI * PI;
    Matrix2::new(
        pi2 * s2x * s2y,
        pi2 * (1.0 - c2x) * c2y,
        -pi2 * c2x * (1.0 - c2y),
        -pi2 * s2x * s2y,
    )
}

/// `f = −Δu + ∇p` for the manufactured solution.
pub fn body_force(x: &Point) -> Vector {
    let (s2x, s2y) = ((2.0 * PI * x.x).sin(), (2.0 * PI * x.y).sin());
    let (c2x, c2y) = ((2.0 * PI * x.x).cos(), (2.0 * PI * x.y).cos());
    let pi3 = PI * PI * PI;
    Vector::new(
        -2.0 * pi3 * s2y * (2.0 * c2x - 1.0) + 2.0 * PI * c2x * s2y,
        2.0 * pi3 * s2x * (2.0 * c2y - 1.0) + 2.0 * PI * s2x * c2y,
    )
}

/// Broken error norms over the partition `{Ω_i}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub l2_u: f64,
    pub h1_u: f64,
    pub l2_p: f64,
}

/// Errors against the manufactured solution, integrated at order `2k + 4`.
pub fn compute_errors(space: &FunctionSpace, coefficients: &[f64]) -> Result<ErrorNorms> {
    compute_errors_against(
        space,
        coefficients,
        &exact_velocity,
        &exact_velocity_gradient,
        &exact_pressure,
    )
}

/// Errors against arbitrary exact fields.
pub fn compute_errors_against(
    space: &FunctionSpace,
    coefficients: &[f64],
    u: &dyn Fn(&Point) -> Vector,
    grad_u: &dyn Fn(&Point) -> Matrix2<f64>,
    p: &dyn Fn(&Point) -> f64,
) -> Result<ErrorNorms> {
    if coefficients.len() < space.num_dofs() {
        return Err(Error::InvalidArgument(format!(
            "{} coefficients for {} unknowns",
            coefficients.len(),
            space.num_dofs()
        )));
    }
    let mm = space.multimesh();
    let rule = TriangleRule::new(2 * space.degree() + 4);
    let (mut eu, mut eg, mut ep) = (0.0, 0.0, 0.0);
    for i in 0..mm.num_meshes() {
        for &c in mm.active_cells(i) {
            for q in mm.dx_quadrature(i, c, &rule) {
                let v = space.eval_field(coefficients, i, c, &q.point)?;
                eu += q.weight * (u(&q.point) - v.velocity).norm_squared();
                eg += q.weight * (grad_u(&q.point) - v.velocity_gradient).norm_squared();
                ep += q.weight * (p(&q.point) - v.pressure).powi(2);
            }
        }
    }
    Ok(ErrorNorms {
        l2_u: eu.sqrt(),
        h1_u: eg.sqrt(),
        l2_p: ep.sqrt(),
    })
}

/// `(Σ_{i>j} h⁻¹ ‖[u_h]‖²_{Γ_ij})^{1/2}`.
pub fn jump_seminorm(space: &FunctionSpace, coefficients: &[f64], h: f64) -> Result<f64> {
    let mm = space.multimesh();
    let mut sum = 0.0;
    for (&(i, j), points) in mm.interface_dbs() {
        for q in points {
            let a = space.eval_field(coefficients, i, q.cell_hi, &q.point)?;
            let b = space.eval_field(coefficients, j, q.cell_lo, &q.point)?;
            sum += q.weight / h * (a.velocity - b.velocity).norm_squared();
        }
    }
    Ok(sum.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    /// Velocity degree; pressure uses `k - 1`.
    pub k: usize,
    /// Number of placed meshes on top of the background.
    pub num_meshes: usize,
    /// Background subdivisions per side, strictly increasing.
    pub levels: Vec<usize>,
    pub seed: u64,
    pub params: FormParameters,
    /// Side length range of the placed squares.
    pub side_range: [f64; 2],
    pub margin: f64,
    pub out: Option<PathBuf>,
    pub plot: bool,
    pub dump_meshes: bool,
    pub dump_quadrature: bool,
    pub dump_system: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            k: 2,
            num_meshes: 0,
            levels: vec![8, 16, 32],
            seed: 42,
            params: FormParameters::default(),
            side_range: [0.2, 0.4],
            margin: 0.05,
            out: None,
            plot: false,
            dump_meshes: false,
            dump_quadrature: false,
            dump_system: false,
        }
    }
}

impl StudyConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.k) {
            return Err(Error::UnsupportedDegree(self.k, "2..=4 for Taylor-Hood"));
        }
        if self.levels.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one level is required".into(),
            ));
        }
        if self.levels[0] == 0 || self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "levels must be positive and strictly increasing".into(),
            ));
        }
        self.params.validate()?;
        random_placements(
            0,
            self.seed,
            (self.side_range[0], self.side_range[1]),
            self.margin,
        )?;
        Ok(())
    }

    /// The placements used at every level.
    pub fn placements(&self) -> Result<Vec<Placement>> {
        random_placements(
            self.num_meshes,
            self.seed,
            (self.side_range[0], self.side_range[1]),
            self.margin,
        )
    }
}

/// Background `n × n` mesh followed by the placed meshes, each with
/// `ceil(side · n)` subdivisions so its cells are no larger than the
/// background's.
pub fn level_meshes(n: usize, placements: &[Placement]) -> Result<Vec<Premesh>> {
    let background = build_structured_mesh(n, &Placement::identity(), None)?;
    let extent = Aabb::from_points(&[Point::new(0.0, 0.0), Point::new(1.0, 1.0)]);
    let mut meshes = vec![background];
    for p in placements {
        let m = ((p.scale * n as f64).ceil() as usize).max(1);
        meshes.push(build_structured_mesh(m, p, Some(&extent))?);
    }
    Ok(meshes)
}

/// Quadrature order used for assembly with degree `k`.
pub fn assembly_order(k: usize) -> usize {
    2 * k + 2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub level: usize,
    pub h: f64,
    pub dofs: usize,
    pub e_l2_u: f64,
    pub e_h1_u: f64,
    pub e_l2_p: f64,
    pub jump_seminorm: f64,
    pub hidden: usize,
}

/// Convergence rates of the four tracked quantities.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RateSet {
    pub l2_u: Option<f64>,
    pub h1_u: Option<f64>,
    pub l2_p: Option<f64>,
    pub jump_seminorm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRate {
    pub from_level: usize,
    pub to_level: usize,
    pub rates: RateSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub placements: Vec<Placement>,
    pub levels: Vec<LevelResult>,
    pub pairwise: Vec<PairRate>,
    /// Least-squares slope of `log e` against `log h`.
    pub fitted: RateSet,
}

/// Rate between two levels; `None` if either error is below the floor.
pub fn pair_rate(h: (f64, f64), e: (f64, f64)) -> Option<f64> {
    (e.0 > RATE_FLOOR && e.1 > RATE_FLOOR).then(|| (e.0 / e.1).ln() / (h.0 / h.1).ln())
}

/// Least-squares slope of `log e` against `log h` over the points whose
/// error exceeds the floor; `None` with fewer than two such points.
pub fn fitted_rate(h: &[f64], e: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = h
        .iter()
        .zip(e)
        .filter(|(_, e)| **e > RATE_FLOOR)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn rate_set(levels: &[LevelResult], f: impl Fn(&[f64], &[f64]) -> Option<f64>) -> RateSet {
    let h: Vec<f64> = levels.iter().map(|l| l.h).collect();
    let col = |g: fn(&LevelResult) -> f64| levels.iter().map(g).collect::<Vec<_>>();
    RateSet {
        l2_u: f(&h, &col(|l| l.e_l2_u)),
        h1_u: f(&h, &col(|l| l.e_h1_u)),
        l2_p: f(&h, &col(|l| l.e_l2_p)),
        jump_seminorm: f(&h, &col(|l| l.jump_seminorm)),
    }
}

impl StudyReport {
    fn new(config: StudyConfig, placements: Vec<Placement>, levels: Vec<LevelResult>) -> Self {
        let pairwise = levels
            .windows(2)
            .map(|w| PairRate {
                from_level: w[0].level,
                to_level: w[1].level,
                rates: rate_set(w, |h, e| pair_rate((h[0], h[1]), (e[0], e[1]))),
            })
            .collect();
        let fitted = rate_set(&levels, fitted_rate);
        StudyReport {
            config,
            placements,
            levels,
            pairwise,
            fitted,
        }
    }
}

/// Result of solving one level.
pub struct LevelSolution {
    pub result: LevelResult,
    pub multimesh: MultiMesh,
    pub coefficients: Vec<f64>,
}

/// Builds, assembles, solves and measures one level.
pub fn solve_level(
    config: &StudyConfig,
    n: usize,
    placements: &[Placement],
) -> Result<LevelSolution> {
    let meshes = level_meshes(n, placements)?;
    let mm = build_multimesh(meshes, assembly_order(config.k))?;
    let space = build_space(&mm, config.k)?;
    let zero = |_: &Point| Vector::zeros();
    let system = assemble_system(&space, &config.params, &body_force, &zero)?;
    let coefficients = solve(&system)?;
    let errors = compute_errors(&space, &coefficients)?;
    let h = config.params.global_h(&mm);
    let result = LevelResult {
        level: n,
        h,
        dofs: space.num_dofs(),
        e_l2_u: errors.l2_u,
        e_h1_u: errors.h1_u,
        e_l2_p: errors.l2_p,
        jump_seminorm: jump_seminorm(&space, &coefficients, h)?,
        hidden: mm.hidden_meshes().len(),
    };
    if let Some(dir) = config.out.as_deref() {
        dump_level(config, dir, n, &mm, &system)?;
    }
    drop(space);
    Ok(LevelSolution {
        result,
        multimesh: mm,
        coefficients,
    })
}

fn dump_level(
    config: &StudyConfig,
    dir: &Path,
    n: usize,
    mm: &MultiMesh,
    system: &crate::assembly::SaddleSystem,
) -> Result<()> {
    let write = |name: String, f: &dyn Fn(&mut fs::File) -> std::io::Result<()>| -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(name);
        let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f(&mut file).map_err(|e| Error::io(&path, e))
    };
    if config.dump_meshes {
        for (i, mesh) in mm.meshes().iter().enumerate() {
            write(format!("mesh_level{n}_{i}.txt"), &|f| mesh.write_dump(f))?;
        }
    }
    if config.dump_quadrature {
        write(format!("quadrature_level{n}.csv"), &|f| {
            mm.write_quadrature_csv(f)
        })?;
    }
    if config.dump_system {
        write(format!("system_level{n}.txt"), &|f| {
            system.write_coordinate(f)
        })?;
    }
    Ok(())
}

/// Runs every level of the study with one set of placements.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    config.validate()?;
    let placements = config.placements()?;
    let mut levels = Vec::with_capacity(config.levels.len());
    for &n in &config.levels {
        let solved = solve_level(config, n, &placements).map_err(|e| Error::Study {
            level: n,
            seed: config.seed,
            source: Box::new(e),
        })?;
        levels.push(solved.result);
    }
    Ok(StudyReport::new(config.clone(), placements, levels))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v:.6}"))
}

/// Per-level errors as CSV.
pub fn errors_csv(report: &StudyReport) -> String {
    let mut s = String::from("level,h,dofs,e_l2_u,e_h1_u,e_l2_p,jump_seminorm,hidden\n");
    for l in &report.levels {
        let _ = writeln!(
            s,
            "{},{:.12e},{},{:.12e},{:.12e},{:.12e},{:.12e},{}",
            l.level, l.h, l.dofs, l.e_l2_u, l.e_h1_u, l.e_l2_p, l.jump_seminorm, l.hidden
        );
    }
    s
}

/// Pairwise and fitted rates as CSV.
pub fn rates_csv(report: &StudyReport) -> String {
    let mut s = String::from("kind,from_level,to_level,l2_u,h1_u,l2_p,jump_seminorm\n");
    let mut row = |kind: &str, from: usize, to: usize, r: &RateSet| {
        let _ = writeln!(
            s,
            "{kind},{from},{to},{},{},{},{}",
            fmt_opt(r.l2_u),
            fmt_opt(r.h1_u),
            fmt_opt(r.l2_p),
            fmt_opt(r.jump_seminorm)
        );
    };
    for p in &report.pairwise {
        row("pair", p.from_level, p.to_level, &p.rates);
    }
    if let (Some(first), Some(last)) = (report.levels.first(), report.levels.last()) {
        row("fit", first.level, last.level, &report.fitted);
    }
    s
}

/// Log–log plot of the errors against `h` with reference slopes `k` and
/// `k + 1`.
pub fn plot_svg(report: &StudyReport) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const M: f64 = 60.0;
    type Series = (&'static str, &'static str, fn(&LevelResult) -> f64);
    let series: [Series; 3] = [
        ("L2 velocity", "#1f77b4", |l| l.e_l2_u),
        ("H1 velocity", "#d62728", |l| l.e_h1_u),
        ("L2 pressure", "#2ca02c", |l| l.e_l2_p),
    ];
    let hs: Vec<f64> = report.levels.iter().map(|l| l.h.log10()).collect();
    let es: Vec<f64> = report
        .levels
        .iter()
        .flat_map(|l| series.iter().map(move |s| s.2(l)))
        .filter(|e| *e > 0.0)
        .map(f64::log10)
        .collect();
    let (hmin, hmax) = hs
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
    let (emin, emax) = es
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
    let (hmin, hmax) = if hmax > hmin {
        (hmin, hmax)
    } else {
        (hmin - 0.5, hmax + 0.5)
    };
    let (emin, emax) = if emax > emin {
        (emin - 0.2, emax + 0.2)
    } else {
        (emin - 1.0, emax + 1.0)
    };
    let px = |lh: f64| M + (lh - hmin) / (hmax - hmin) * (W - 2.0 * M);
    let py = |le: f64| H - M - (le - emin) / (emax - emin) * (H - 2.0 * M);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * M,
        H - 2.0 * M
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">log10 h</text>"#,
        W / 2.0,
        H - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{}" transform="rotate(-90 20 {})" text-anchor="middle">log10 error</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (idx, (name, color, get)) in series.iter().enumerate() {
        let pts: Vec<String> = report
            .levels
            .iter()
            .filter(|l| get(l) > 0.0)
            .map(|l| format!("{:.2},{:.2}", px(l.h.log10()), py(get(l).log10())))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{name}</text>"#,
            M + 10.0,
            M + 20.0 + 18.0 * idx as f64
        );
    }
    let k = report.config.k as f64;
    if let (Some(first), Some(last)) = (report.levels.first(), report.levels.last()) {
        for (slope, dash) in [(k + 1.0, "6,4"), (k, "2,3")] {
            let anchor = first.e_h1_u.max(first.e_l2_u).max(1e-300).log10();
            let (x0, x1) = (first.h.log10(), last.h.log10());
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="{dash}"/>"#,
                px(x0),
                py(anchor),
                px(x1),
                py(anchor + slope * (x1 - x0))
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" fill="gray">slope {slope}</text>"#,
                px(x1) + 4.0,
                py(anchor + slope * (x1 - x0))
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `errors.csv`, `rates.csv`, `report.json` and optionally
/// `convergence.svg` into `dir`.
pub fn emit_report(report: &StudyReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = vec![
        ("errors.csv", errors_csv(report)),
        ("rates.csv", rates_csv(report)),
        ("report.json", serde_json::to_string_pretty(report)? + "\n"),
    ];
    if report.config.plot {
        files.push(("convergence.svg", plot_svg(report)));
    }
    let mut written = Vec::new();
    for (name, contents) in files {
        let path = dir.join(name);
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(contents.as_bytes())
            .map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Divergence-free polynomial velocity of degree `k`,
/// `(x^k + k x y^{k−1}, −(k x^{k−1} y + y^k))`.
pub fn patch_velocity(k: usize, x: &Point) -> Vector {
    let k = k as i32;
    let kf = k as f64;
    Vector::new(
        x.x.powi(k) + kf * x.x * x.y.powi(k - 1),
        -(kf * x.x.powi(k - 1) * x.y + x.y.powi(k)),
    )
}

/// Mean-zero pressure of degree `k − 1`, `x^{k−1} + y^{k−1} − 2/k`.
pub fn patch_pressure(k: usize, x: &Point) -> f64 {
    let ki = k as i32;
    x.x.powi(ki - 1) + x.y.powi(ki - 1) - 2.0 / k as f64
}

/// `−Δu + ∇p` for the patch-test pair.
pub fn patch_force(k: usize, x: &Point) -> Vector {
    let kf = k as f64;
    // c · t^e with c = 0 whenever e would be negative
    let mono = |c: f64, t: f64, e: i32| if c == 0.0 { 0.0 } else { c * t.powi(e) };
    let k = k as i32;
    let lap_u1 =
        mono(kf * (kf - 1.0), x.x, k - 2) + mono(kf * (kf - 1.0) * (kf - 2.0), x.y, k - 3) * x.x;
    let lap_u2 =
        -(mono(kf * (kf - 1.0) * (kf - 2.0), x.x, k - 3) * x.y + mono(kf * (kf - 1.0), x.y, k - 2));
    let grad_p = Vector::new(mono(kf - 1.0, x.x, k - 2), mono(kf - 1.0, x.y, k - 2));
    Vector::new(-lap_u1, -lap_u2) + grad_p
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchReport {
    /// Largest velocity error over nodes and quadrature points.
    pub velocity_error: f64,
    /// Largest pressure error over nodes and quadrature points.
    pub pressure_error: f64,
    pub dofs: usize,
    pub hidden: usize,
}

/// Solves the patch problem on a background `n × n` mesh with the given
/// placements and compares the solution with the exact polynomials at the
/// nodes and at the `dX` quadrature points.
pub fn run_patch_test(
    k: usize,
    n: usize,
    placements: &[Placement],
    params: &FormParameters,
) -> Result<PatchReport> {
    let mm = build_multimesh(level_meshes(n, placements)?, assembly_order(k))?;
    let space = build_space(&mm, k)?;
    let u = |x: &Point| patch_velocity(k, x);
    let p = |x: &Point| patch_pressure(k, x);
    let f = |x: &Point| patch_force(k, x);
    let system = assemble_system(&space, params, &f, &u)?;
    let x = solve(&system)?;
    let exact = space.interpolate(u, p);
    let max_diff =
        |range: std::ops::Range<usize>| range.map(|d| (x[d] - exact[d]).abs()).fold(0.0, f64::max);
    let (mut velocity_error, mut pressure_error) = (
        max_diff(0..space.num_velocity_dofs()),
        max_diff(space.num_velocity_dofs()..space.num_dofs()),
    );
    let rule = TriangleRule::new(assembly_order(k));
    for i in 0..mm.num_meshes() {
        for &c in mm.active_cells(i) {
            for q in mm.dx_quadrature(i, c, &rule) {
                let v = space.eval_field(&x, i, c, &q.point)?;
                velocity_error = velocity_error.max((v.velocity - u(&q.point)).amax());
                pressure_error = pressure_error.max((v.pressure - p(&q.point)).abs());
            }
        }
    }
    Ok(PatchReport {
        velocity_error,
        pressure_error,
        dofs: space.num_dofs(),
        hidden: mm.hidden_meshes().len(),
    })
}

/// Worst geometric conservation errors of one multimesh.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GeometryCheck {
    /// `|Σ_i |Ω_i| − 1|`.
    pub area_error: f64,
    /// Worst `| |K| − |K∩Ω_i| − Σ_{j>i} |K∩O_ij| |` over cut cells.
    pub cell_partition_error: f64,
    /// Worst `|Σ_j |Γ_ij| − sampled |Γ_i||` over placed meshes.
    pub interface_error: f64,
    pub hidden: usize,
}

impl GeometryCheck {
    pub fn worst(self, other: GeometryCheck) -> GeometryCheck {
        GeometryCheck {
            area_error: self.area_error.max(other.area_error),
            cell_partition_error: self.cell_partition_error.max(other.cell_partition_error),
            interface_error: self.interface_error.max(other.interface_error),
            hidden: self.hidden.max(other.hidden),
        }
    }
}

/// Estimates `|Γ_i|` by testing `samples` evenly spaced points per boundary
/// facet for coverage by higher predomains.
pub fn sampled_interface_length(mm: &MultiMesh, i: usize, samples: usize) -> f64 {
    let mesh = mm.mesh(i);
    let higher: Vec<_> = (i + 1..mm.num_meshes()).map(|m| mm.domain(m)).collect();
    mesh.boundary_facets()
        .iter()
        .map(|&facet| {
            let (a, b) = mesh.facet_endpoints(facet);
            let visible = (0..samples)
                .filter(|&s| {
                    let t = (s as f64 + 0.5) / samples as f64;
                    let x = a + (b - a) * t;
                    !higher.iter().any(|d| d.contains(&x, 0.0))
                })
                .count();
            (b - a).norm() * visible as f64 / samples as f64
        })
        .sum()
}

/// Area, per-cell and interface-length conservation of one multimesh.
pub fn check_geometry(mm: &MultiMesh, samples_per_facet: usize) -> GeometryCheck {
    let total: f64 = (0..mm.num_meshes()).map(|i| mm.visible_area(i)).sum();
    let mut cell_error: f64 = 0.0;
    for i in 0..mm.num_meshes() {
        let mut covered = std::collections::BTreeMap::<usize, f64>::new();
        for j in i + 1..mm.num_meshes() {
            for q in mm.overlap_db(i, j) {
                *covered.entry(q.cell_i).or_default() += q.weight;
            }
        }
        for c in mm.cut_cells(i) {
            let area = triangle_area(&mm.mesh(i).cell_triangle(c));
            let visible: f64 = mm.cut_quadrature(i, c).iter().map(|q| q.weight).sum();
            let other = covered.get(&c).copied().unwrap_or(0.0);
            cell_error = cell_error.max((area - visible - other).abs());
        }
        debug_assert!(mm.cell_kinds(i).iter().all(|k| *k != CellKind::Cut) || !mm.is_hidden(i));
    }
    let mut interface_error: f64 = 0.0;
    for i in 1..mm.num_meshes() {
        let computed: f64 = (0..i)
            .flat_map(|j| mm.interface_db(i, j))
            .map(|q| q.weight)
            .sum();
        let sampled = sampled_interface_length(mm, i, samples_per_facet);
        interface_error = interface_error.max((computed - sampled).abs());
    }
    GeometryCheck {
        area_error: (total - 1.0).abs(),
        cell_partition_error: cell_error,
        interface_error,
        hidden: mm.hidden_meshes().len(),
    }
}

/// Builds `seeds` random multimeshes with `num_meshes` placed squares on an
/// `n × n` background and returns the worst conservation errors.
pub fn verify_geometry(
    num_meshes: usize,
    seeds: std::ops::Range<u64>,
    n: usize,
    side_range: (f64, f64),
    margin: f64,
    samples_per_facet: usize,
) -> Result<GeometryCheck> {
    let mut worst = GeometryCheck::default();
    for seed in seeds {
        let placements = random_placements(num_meshes, seed, side_range, margin)?;
        let mm = build_multimesh(level_meshes(n, &placements)?, 6).map_err(|e| Error::Study {
            level: n,
            seed,
            source: Box::new(e),
        })?;
        worst = worst.worst(check_geometry(&mm, samples_per_facet));
    }
    Ok(worst)
}

//! Acceptance suite: one PASS/FAIL line per criterion.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use mmstokes::assembly::{assemble_forms, assemble_system, FormParameters};
use mmstokes::fem::build_space;
use mmstokes::mesh::{random_placements, Placement};
use mmstokes::multimesh::build_multimesh;
use mmstokes::study::{
    assembly_order, body_force, level_meshes, run_patch_test, run_study, solve_level,
    verify_geometry, RateSet, StudyConfig,
};
use mmstokes::{Point, Vector};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> mmstokes::Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn rates(r: &RateSet) -> [f64; 3] {
    [r.l2_u, r.h1_u, r.l2_p].map(|v| v.unwrap_or(f64::NAN))
}

fn single_mesh_baseline() -> mmstokes::Result<Outcome> {
    let config = StudyConfig {
        k: 2,
        num_meshes: 0,
        levels: vec![8, 16, 32, 64],
        ..Default::default()
    };
    let [u, g, p] = rates(&run_study(&config)?.fitted);
    let pass = (u - 3.0).abs() <= 0.2 && (g - 2.0).abs() <= 0.2 && p >= 1.8;
    outcome(
        pass,
        format!("rates L2(u) {u:.4}, H1(u) {g:.4}, L2(p) {p:.4}"),
    )
}

fn multimesh_convergence(
    k: usize,
    counts: &[usize],
    seeds: &[u64],
    min: [f64; 3],
) -> mmstokes::Result<Outcome> {
    let mut worst = [f64::INFINITY; 3];
    for &num_meshes in counts {
        for &seed in seeds {
            let config = StudyConfig {
                k,
                num_meshes,
                seed,
                levels: vec![8, 16, 32],
                ..Default::default()
            };
            let r = rates(&run_study(&config)?.fitted);
            for (w, v) in worst.iter_mut().zip(r) {
                // NaN (missing rate) must fail
                *w = if v.is_nan() { f64::NAN } else { w.min(v) };
            }
        }
    }
    let pass = worst.iter().zip(min).all(|(w, m)| *w >= m);
    outcome(
        pass,
        format!(
            "worst rates L2(u) {:.4}, H1(u) {:.4}, L2(p) {:.4} over N in {counts:?}, seeds {seeds:?}",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn patch_test() -> mmstokes::Result<Outcome> {
    let params = FormParameters::default();
    let mut layouts = vec![vec![
        Placement::centered(0.4, 0.3, [0.42, 0.45])?,
        Placement::centered(0.35, 1.0, [0.58, 0.55])?,
    ]];
    for seed in 1..=4 {
        layouts.push(random_placements(2, seed, (0.25, 0.45), 0.05)?);
    }
    let (mut eu, mut ep) = (0.0_f64, 0.0_f64);
    for placements in &layouts {
        let r = run_patch_test(2, 6, placements, &params)?;
        eu = eu.max(r.velocity_error);
        ep = ep.max(r.pressure_error);
    }
    outcome(
        eu <= 1e-9 && ep <= 1e-8,
        format!(
            "max |u - u_h| {eu:.3e}, max |p - p_h| {ep:.3e} over {} layouts",
            layouts.len()
        ),
    )
}

fn geometry_conservation() -> mmstokes::Result<Outcome> {
    let c = verify_geometry(8, 0..100, 16, (0.2, 0.4), 0.05, 100_000)?;
    outcome(
        c.area_error <= 1e-10 && c.cell_partition_error <= 1e-10 && c.interface_error <= 1e-3,
        format!(
            "area {:.3e}, cell partition {:.3e}, interface length {:.3e}",
            c.area_error, c.cell_partition_error, c.interface_error
        ),
    )
}

fn symmetry_without_least_squares() -> mmstokes::Result<Outcome> {
    let placements = random_placements(1, 1, (0.2, 0.4), 0.05)?;
    let mm = build_multimesh(level_meshes(8, &placements)?, assembly_order(2))?;
    let space = build_space(&mm, 2)?;
    let params = FormParameters {
        delta: 0.0,
        ..Default::default()
    };
    let zero = |_: &Point| Vector::zeros();
    let forms = assemble_forms(&space, &params, &body_force)?
        .matrix
        .max_asymmetry();
    let full = assemble_system(&space, &params, &body_force, &zero)?
        .matrix
        .max_asymmetry();
    outcome(
        forms <= 1e-12 && full <= 1e-12,
        format!(
            "max asymmetry {forms:.3e} (forms), {full:.3e} (with constraints), {} cut cells",
            mm.cut_cells(0).len()
        ),
    )
}

fn hidden_mesh() -> mmstokes::Result<Outcome> {
    let placements = [
        Placement::centered(0.2, 0.0, [0.5, 0.5])?,
        Placement::centered(0.5, 0.3, [0.5, 0.5])?,
    ];
    let config = StudyConfig {
        k: 2,
        ..Default::default()
    };
    let solved = solve_level(&config, 8, &placements)?;
    let space = build_space(&solved.multimesh, 2)?;
    let r = &solved.result;
    let finite = [r.e_l2_u, r.e_h1_u, r.e_l2_p].iter().all(|e| e.is_finite());
    outcome(
        r.hidden >= 1 && space.mesh_dofs(1) == 0 && finite,
        format!(
            "hidden {}, dofs of covered mesh {}, L2(u) {:.3e}",
            r.hidden,
            space.mesh_dofs(1),
            r.e_l2_u
        ),
    )
}

fn weak_continuity() -> mmstokes::Result<Outcome> {
    let mut pass = true;
    let mut seqs = Vec::new();
    for seed in 1..=3 {
        let config = StudyConfig {
            k: 2,
            num_meshes: 2,
            seed,
            levels: vec![8, 16, 32],
            ..Default::default()
        };
        let jumps: Vec<f64> = run_study(&config)?
            .levels
            .iter()
            .map(|l| l.jump_seminorm)
            .collect();
        pass &= jumps.windows(2).all(|w| w[1] < w[0]);
        seqs.push(format!(
            "{:.2e}>{:.2e}>{:.2e}",
            jumps[0], jumps[1], jumps[2]
        ));
    }
    outcome(pass, format!("jump seminorms {}", seqs.join(", ")))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, Duration, fn() -> mmstokes::Result<Outcome>);
    let criteria: [Criterion; 8] = [
        (
            "1 single-mesh baseline",
            Duration::from_secs(120),
            single_mesh_baseline,
        ),
        (
            "2 multimesh convergence k=2",
            Duration::from_secs(600),
            || multimesh_convergence(2, &[1, 2, 4], &[1, 2, 3], [2.7, 1.7, 1.7]),
        ),
        (
            "3 multimesh convergence k=3",
            Duration::from_secs(600),
            || multimesh_convergence(3, &[1], &[1], [3.7, 2.7, 2.7]),
        ),
        ("4 patch test", Duration::MAX, patch_test),
        (
            "5 geometry conservation",
            Duration::from_secs(120),
            geometry_conservation,
        ),
        (
            "6 symmetry with delta=0",
            Duration::MAX,
            symmetry_without_least_squares,
        ),
        ("7 hidden mesh", Duration::MAX, hidden_mesh),
        ("8 weak continuity", Duration::MAX, weak_continuity),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && elapsed <= budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!(
            "{} criterion {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}

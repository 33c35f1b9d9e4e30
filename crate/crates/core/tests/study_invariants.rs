use mmstokes::fem::build_space;
use mmstokes::mesh::Placement;
use mmstokes::multimesh::build_multimesh;
use mmstokes::study::{
    compute_errors, exact_velocity, level_meshes, run_study, solve_level, StudyConfig,
};
use mmstokes::Point;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn multimesh_error_is_within_bounded_factor_of_single_mesh() {
    let levels = vec![8, 16];
    let single = run_study(&StudyConfig {
        levels: levels.clone(),
        ..Default::default()
    })
    .unwrap();
    let multi = run_study(&StudyConfig {
        levels,
        num_meshes: 2,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let (s, m) = (single.levels.last().unwrap(), multi.levels.last().unwrap());
    for (a, b) in [
        (m.e_l2_u, s.e_l2_u),
        (m.e_h1_u, s.e_h1_u),
        (m.e_l2_p, s.e_l2_p),
    ] {
        assert!(a / b < 1e3, "{a} / {b}");
    }
}

#[test]
fn errors_decay_under_refinement() {
    for (k, levels) in [(2, vec![4, 8, 16]), (3, vec![4, 8])] {
        for num_meshes in [0, 1, 2, 4] {
            let config = StudyConfig {
                k,
                num_meshes,
                seed: 7,
                levels: levels.clone(),
                ..Default::default()
            };
            let report = run_study(&config).unwrap();
            for w in report.levels.windows(2) {
                for (a, b) in [
                    (w[0].e_l2_u, w[1].e_l2_u),
                    (w[0].e_h1_u, w[1].e_h1_u),
                    (w[0].e_l2_p, w[1].e_l2_p),
                ] {
                    assert!(
                        a >= 1.5 * b,
                        "k={k}, N={num_meshes}, levels {}->{}: {a} vs {b}",
                        w[0].level,
                        w[1].level
                    );
                }
            }
        }
    }
}

#[test]
fn zero_solution_error_matches_monte_carlo() {
    let placements = [Placement::centered(0.3, 0.4, [0.45, 0.5]).unwrap()];
    let mm = build_multimesh(level_meshes(6, &placements).unwrap(), 6).unwrap();
    let space = build_space(&mm, 2).unwrap();
    let e = compute_errors(&space, &vec![0.0; space.system_size()]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let samples = 1_000_000;
    let mean: f64 = (0..samples)
        .map(|_| exact_velocity(&Point::new(rng.random(), rng.random())).norm_squared())
        .sum::<f64>()
        / samples as f64;
    let estimate = mean.sqrt();
    assert!(
        ((e.l2_u - estimate) / estimate).abs() <= 1e-3,
        "{} vs {estimate}",
        e.l2_u
    );
}

#[test]
fn errors_are_independent_of_ordering_of_disjoint_meshes() {
    let a = Placement::centered(0.25, 0.2, [0.3, 0.3]).unwrap();
    let b = Placement::centered(0.25, 0.5, [0.7, 0.7]).unwrap();
    let config = StudyConfig::default();
    let ab = solve_level(&config, 8, &[a, b]).unwrap().result;
    let ba = solve_level(&config, 8, &[b, a]).unwrap().result;
    assert_eq!(ab.dofs, ba.dofs);
    for (x, y) in [
        (ab.e_l2_u, ba.e_l2_u),
        (ab.e_h1_u, ba.e_h1_u),
        (ab.e_l2_p, ba.e_l2_p),
        (ab.jump_seminorm, ba.jump_seminorm),
    ] {
        assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
    }
}

#[test]
fn l2_stabilization_and_per_pair_h_converge() {
    let mut config = StudyConfig {
        num_meshes: 2,
        seed: 9,
        levels: vec![8, 16],
        ..Default::default()
    };
    config.params.stabilization = mmstokes::assembly::Stabilization::L2;
    config.params.per_pair_h = true;
    let report = run_study(&config).unwrap();
    let r = report.fitted;
    assert!(
        r.l2_u.unwrap() > 2.5 && r.h1_u.unwrap() > 1.5 && r.l2_p.unwrap() > 1.5,
        "{r:?}"
    );
}

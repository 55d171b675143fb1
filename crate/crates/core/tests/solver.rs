use lbbp_core::evaluation::geodesic_errors;
use lbbp_core::features::{build_diffusion_basis, FeatureKind};
use lbbp_core::lbbp::{grad_w, initial_state, reduced_inputs, solve, LbbpOutcome};
use lbbp_core::mesh::{farthest_point_sample, shapes};
use lbbp_core::pipeline::PreparedPair;
use lbbp_core::{register, Correspondence, LbbpConfig, LbbpState, Point, TriangleMesh};
use nalgebra::{Rotation3, Unit, Vector3};

fn landmarks(n: usize, count: usize) -> Vec<(usize, usize)> {
    (0..count).map(|j| (j * n / count, j * n / count)).collect()
}

fn cold(k: usize, iterations: usize) -> LbbpConfig {
    let mut config = LbbpConfig {
        k,
        seed: 1,
        max_outer_iterations: iterations,
        ..Default::default()
    };
    config.warm_start.enabled = false;
    config
}

fn cold_solve(source: &TriangleMesh, target: &TriangleMesh, config: &LbbpConfig) -> (PreparedPair, LbbpOutcome) {
    let marks = landmarks(source.num_vertices(), 16);
    let (mut pair, _) = PreparedPair::new(source, target, &marks, config).unwrap();
    let start = pair.cold_start(config).unwrap();
    let out = pair.solve(start, config).unwrap();
    (pair, out)
}

#[test]
fn steps_are_square_summable() {
    let (source, target) = shapes::stretched_sphere_pair(4, 0.3);
    let config = LbbpConfig {
        termination_tolerance: 0.0,
        max_reinits: 0,
        ..cold(10, 500)
    };
    let (_, out) = cold_solve(&source, &target, &config);
    assert_eq!(out.iterations, 500);
    let steps: Vec<f64> = out.trace.iter().skip(1).map(|r| r.step_sq).collect();
    let total: f64 = steps.iter().sum();
    let tail: f64 = steps[steps.len() - 50..].iter().sum();
    assert!(total.is_finite() && total > 0.0);
    assert!(tail <= 0.01 * total, "last 50 steps carry {tail:e} of {total:e}");
}

/// Icosphere pushed by a smooth field with no symmetry, so the spectrum is
/// simple and eigenvectors are unique up to sign.
fn lumpy(c: [f64; 4]) -> TriangleMesh {
    shapes::icosphere(2, 1.0)
        .map_vertices(|p: &Point| p * (1.0 + c[0] * p.x + c[1] * p.y * p.y + c[2] * p.x * p.z + c[3] * (2.0 * p.y + p.z).sin()))
        .unwrap()
}

#[test]
fn rigid_motion_leaves_the_solve_unchanged() {
    let source = lumpy([0.12, 0.2, 0.1, 0.05]);
    let target = lumpy([0.2, 0.1, 0.25, 0.15]);
    let config = LbbpConfig {
        max_reinits: 0,
        ..cold(8, 40)
    };
    let (_, base) = cold_solve(&source, &target, &config);

    let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(1.0, -2.0, 0.5)), 0.9);
    let shift = Vector3::new(4.0, -1.0, 2.5);
    let moved = |m: &TriangleMesh| m.map_vertices(|p: &Point| rot * p + shift).unwrap();
    for (s, t) in [(moved(&source), target.clone()), (source.clone(), moved(&target))] {
        let (_, out) = cold_solve(&s, &t, &config);
        assert_eq!(out.iterations, base.iterations);
        // Coordinates change, so only rounding separates the two solves.
        for (a, b) in out.trace.iter().zip(&base.trace) {
            assert!((a.total - b.total).abs() <= 1e-7 * b.total.abs(), "iteration {}: {} vs {}", a.iteration, a.total, b.total);
        }
        assert!((&out.state.w - &base.state.w).amax() < 1e-6);
    }
}

#[test]
fn delta_limit_warm_start_tracks_the_cold_solve() {
    // With one delta per vertex the reduced problem is the full problem
    // with its vertices relabelled, so both solves follow the same path.
    let (source, target) = shapes::stretched_sphere_pair(4, 0.3);
    let config = LbbpConfig {
        max_reinits: 0,
        termination_tolerance: 0.0,
        ..cold(8, 30)
    };
    let (pair, full) = cold_solve(&source, &target, &config);
    let n = target.num_vertices();
    let hierarchy = farthest_point_sample(&pair.target, &[n], 0).unwrap();
    let basis = build_diffusion_basis(&pair.m2, &pair.s2, &hierarchy, 0, 0.0, 1).unwrap();
    let mut reduced = reduced_inputs(&pair.inputs, &basis).unwrap();
    let psi_c = basis.project(&pair.psi0.vectors).unwrap();
    let start = initial_state(&reduced, &psi_c, &config).unwrap();
    let out = solve(&mut reduced, start, &config, None).unwrap();
    for (a, b) in out.trace.iter().zip(&full.trace) {
        assert!((a.total - b.total).abs() <= 1e-6 * b.total.abs(), "iteration {}: {} vs {}", a.iteration, a.total, b.total);
    }
}

#[test]
fn area_term_gradient_points_along_mass_weighted_w() {
    let mesh = shapes::icosphere(2, 1.0).scaled(1.7).unwrap();
    let config = LbbpConfig {
        r1: 0.0,
        r2: 0.0,
        r3: 0.0,
        r4: 0.5,
        eta: Some(f64::INFINITY),
        ..cold(6, 1)
    };
    let (pair, _) = cold_solve(&mesh, &mesh, &config);
    let start = pair.cold_start(&config).unwrap();
    let w = start.w.map(|v| v * 1.2);
    let state = LbbpState::new(w.clone(), start.psibar.clone(), 0.1);
    let g = grad_w(&state, &pair.inputs, &config).unwrap();
    let m2w = w.component_mul(&nalgebra::DVector::from_column_slice(&pair.inputs.m2));
    let cos = g.dot(&m2w) / (g.norm() * m2w.norm());
    assert!((cos - 1.0).abs() < 1e-12, "cosine {cos}");
}

#[test]
fn heat_features_register_the_fixture_pair() {
    let (source, target) = shapes::stretched_sphere_pair(6, 0.3);
    let n = source.num_vertices();
    let mut config = LbbpConfig {
        k: 20,
        seed: 4,
        max_outer_iterations: 300,
        ..Default::default()
    };
    config.features.kind = FeatureKind::HeatDiffusion;
    let reg = register(&source, &target, &landmarks(n, 30), &config).unwrap();
    assert!(reg.outcome.max_descent_gap() <= config.descent_slack);
    let report = geodesic_errors(&reg.correspondence, &Correspondence::identity(n), &target).unwrap();
    eprintln!(
        "heat features: within 0.05 {:.3}, exact {:.3}, {} reinits",
        report.summary.fraction_within_5pct,
        report.summary.fraction_exact,
        reg.outcome.reinits.len()
    );
    assert!(report.summary.fraction_within_5pct >= 0.8);
}

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use lbbp_core::correspondence::point_to_point;
use lbbp_core::eigen::{solve_eigs, EigOptions};
use lbbp_core::features::indicator_features;
use lbbp_core::fem::{assemble_mass, assemble_stiffness};
use lbbp_core::lbbp::{grad_psibar, grad_w, initial_state, proximal_objective};
use lbbp_core::linalg::random_normal;
use lbbp_core::mesh::{farthest_point_sample, shapes};
use lbbp_core::{LbbpConfig, LbbpInputs};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn eigensystem(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_eigs");
    group.sample_size(10);
    for frequency in [6usize, 12] {
        let mesh = shapes::geodesic_sphere(frequency, 1.0);
        let (m, s) = (assemble_mass(&mesh), assemble_stiffness(&mesh));
        group.bench_with_input(BenchmarkId::new("k50", mesh.num_vertices()), &(), |b, _| {
            b.iter(|| solve_eigs(&s, &m, 50, &EigOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn energy_and_gradients(c: &mut Criterion) {
    let (source, target) = shapes::stretched_sphere_pair(12, 0.3);
    let n = source.num_vertices();
    let k = 50;
    let (m1, s1) = (assemble_mass(&source), assemble_stiffness(&source));
    let (m2, s2) = (assemble_mass(&target), assemble_stiffness(&target));
    let phi = solve_eigs(&s1, &m1, k, &EigOptions::default()).unwrap();
    let psi0 = solve_eigs(&s2, &m2, k, &EigOptions::default()).unwrap();
    let marks = farthest_point_sample(&source, &[n, 50], 0).unwrap().level(1).to_vec();
    let f = indicator_features(n, &marks).unwrap().values;
    let inputs = LbbpInputs::new(&m1.diagonal(), &phi.vectors, &f, m2.diagonal(), s2, f.clone()).unwrap();
    let config = LbbpConfig {
        k,
        ..Default::default()
    };
    let state = initial_state(&inputs, &psi0.vectors, &config).unwrap();

    let mut group = c.benchmark_group("objective");
    group.bench_function("energy", |b| b.iter(|| proximal_objective(black_box(&state), &inputs, &config).unwrap()));
    group.bench_function("grad_psibar", |b| b.iter(|| grad_psibar(black_box(&state), &inputs, &config).unwrap()));
    group.bench_function("grad_w", |b| b.iter(|| grad_w(black_box(&state), &inputs, &config).unwrap()));
    group.finish();
}

fn matching(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let phi = random_normal(1442, 50, &mut rng);
    let psi = random_normal(1442, 50, &mut rng);
    c.bench_function("point_to_point/1442x50", |b| b.iter(|| point_to_point(black_box(&phi), &psi).unwrap()));
}

criterion_group!(benches, eigensystem, energy_and_gradients, matching);
criterion_main!(benches);

//! Parallel pool against a single-thread pool on the hot kernels. Building
//! with `--no-default-features` benches the plain sequential path instead.

use std::hint::black_box;
use std::sync::Arc;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use parabolic_dg::assembly::{assemble_stiffness, default_stiffness_order};
use parabolic_dg::coeffs::corpus_field;
use parabolic_dg::opcalc::{Modulus, OperatorCalculus};
use parabolic_dg::{corpus_problem, solve, FeSpace, Mesh, TimeGrid};
use rayon::{ThreadPool, ThreadPoolBuilder};

fn pools() -> Vec<(&'static str, ThreadPool)> {
    let n = std::thread::available_parallelism().map_or(1, |n| n.get());
    vec![
        (
            "pool",
            ThreadPoolBuilder::new().num_threads(n).build().unwrap(),
        ),
        (
            "single",
            ThreadPoolBuilder::new().num_threads(1).build().unwrap(),
        ),
    ]
}

fn square(n: usize, r: usize) -> Arc<FeSpace> {
    Arc::new(FeSpace::new(Arc::new(Mesh::unit_square(n).unwrap()), r).unwrap())
}

fn assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("assembly");
    let field = corpus_field("anisotropic").unwrap();
    for n in [16, 48] {
        let space = square(n, 2);
        let order = default_stiffness_order(&space);
        for (name, pool) in pools() {
            g.bench_with_input(BenchmarkId::new(name, n), &space, |b, s| {
                b.iter(|| {
                    pool.install(|| black_box(assemble_stiffness(s, &field, 0.5, order).unwrap()))
                })
            });
        }
    }
    g.finish();
}

fn time_stepping(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve");
    let space = square(24, 1);
    for steps in [16, 64] {
        let problem = corpus_problem(
            "heat-anisotropic",
            space.clone(),
            TimeGrid::uniform(1.0, steps).unwrap(),
        )
        .unwrap();
        for (name, pool) in pools() {
            g.bench_with_input(BenchmarkId::new(name, steps), &problem, |b, p| {
                b.iter(|| pool.install(|| black_box(solve(p).unwrap())))
            });
        }
    }
    g.finish();
}

fn operator_norms(c: &mut Criterion) {
    let mut g = c.benchmark_group("contraction_audit");
    let space = Arc::new(FeSpace::new(Arc::new(Mesh::interval(0.0, 1.0, 32).unwrap()), 1).unwrap());
    let field = corpus_field("anisotropic").unwrap();
    let modulus = Modulus::fit(&field, 1, 1.0).unwrap();
    for steps in [8, 16] {
        let grid = TimeGrid::uniform(1.0, steps).unwrap();
        let calc = OperatorCalculus::new(&space, &field, &grid, 4, 4.0, 10_000).unwrap();
        for (name, pool) in pools() {
            g.bench_with_input(BenchmarkId::new(name, steps), &calc, |b, calc| {
                b.iter(|| pool.install(|| black_box(calc.contraction_audit(&modulus).unwrap())))
            });
        }
    }
    g.finish();
}

criterion_group!(
    name = kernels;
    config = Criterion::default().sample_size(10).measurement_time(Duration::from_secs(2));
    targets = assembly, time_stepping, operator_norms
);
criterion_main!(kernels);

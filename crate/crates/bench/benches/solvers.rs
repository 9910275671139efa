use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use cusplab::spectral::{eigendecompose, weighted_resolvent_norm, ResolventSolver};
use cusplab_bench::glued_model;
use num_complex::Complex64;
use std::hint::black_box;

fn dense_eigen(c: &mut Criterion) {
    let mut g = c.benchmark_group("eigendecompose");
    g.sample_size(10);
    for n1 in [50, 100, 200] {
        let m = glued_model(n1);
        g.bench_with_input(BenchmarkId::from_parameter(n1), &m.h, |b, h| b.iter(|| eigendecompose(black_box(h)).unwrap()));
    }
    g.finish();
}

fn banded_resolvent(c: &mut Criterion) {
    let mut g = c.benchmark_group("banded_resolvent");
    let z = Complex64::new(2.0, 1e-3);
    for n1 in [1000, 10000] {
        let m = glued_model(n1);
        let f = vec![Complex64::new(1.0, 0.0); m.dim()];
        g.bench_with_input(BenchmarkId::new("factor", n1), &m.h, |b, h| b.iter(|| ResolventSolver::new(black_box(h), z).unwrap()));
        let solver = ResolventSolver::new(&m.h, z).unwrap();
        g.bench_with_input(BenchmarkId::new("solve", n1), &f, |b, f| b.iter(|| solver.solve(black_box(f))));
    }
    g.finish();
}

fn resolvent_norm(c: &mut Criterion) {
    let mut g = c.benchmark_group("weighted_resolvent_norm");
    g.sample_size(10);
    let z = Complex64::new(2.0, 1e-2);
    for n1 in [256, 2048] {
        let m = glued_model(n1);
        let w = m.lambda_weight(1.0);
        g.bench_with_input(BenchmarkId::from_parameter(n1), &(m.h, w), |b, (h, w)| b.iter(|| weighted_resolvent_norm(black_box(h), w, z).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, dense_eigen, banded_resolvent, resolvent_norm);
criterion_main!(benches);

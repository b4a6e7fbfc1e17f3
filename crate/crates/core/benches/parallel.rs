//! Data-parallel hot paths on the default rayon pool against a one-thread
//! pool. Build with `--no-default-features` to bench the sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;

use nngp::activation::ActivationKind;
use nngp::finite_width::ensemble_stats;
use nngp::gauss_expect::{mc_expect_pair, BivariateGaussianMoments};
use nngp::kernel::{gram, KernelSpec};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("1-thread", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("default", rayon::ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn points(m: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, d, |i, j| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0)
}

fn bench_gram(c: &mut Criterion) {
    let mut spec = KernelSpec::standard(3, 4, ActivationKind::Erf);
    spec.layers[0].mu_w = 0.5;
    let x = points(48, 4);
    let mut g = c.benchmark_group("gram");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| pool.install(|| gram(&spec, &x).unwrap())));
    }
    g.finish();
}

fn bench_ensemble(c: &mut Criterion) {
    let spec = KernelSpec::standard(2, 3, ActivationKind::ReLU);
    let probes = points(5, 3);
    let mut g = c.benchmark_group("ensemble_stats");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| ensemble_stats(&spec, &[128, 128], 2, &probes, 500, 1).unwrap()))
        });
    }
    g.finish();
}

fn bench_mc(c: &mut Criterion) {
    let m = BivariateGaussianMoments::new(0.3, -0.2, 1.0, 2.0, 0.7).unwrap();
    let mut g = c.benchmark_group("mc_expect_pair");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| mc_expect_pair(m, ActivationKind::Tanh, 1_000_000, 7).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_gram, bench_ensemble, bench_mc);
criterion_main!(benches);

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use qfp_bench::{canonical, coherent, cosine, grid};
use qfp_core::wigner::wigner_from_characteristic;
use qfp_core::{build_superoperator, certify, evolve, solve_steady, wigner_transform};

fn bench_superoperator(c: &mut Criterion) {
    let mut group = c.benchmark_group("superoperator");
    for n in [16, 32] {
        group.bench_function(format!("cosine n={n}"), |b| {
            b.iter(|| build_superoperator(black_box(&cosine()), n).unwrap())
        });
    }
    group.finish();
}

fn bench_steady(c: &mut Criterion) {
    let mut group = c.benchmark_group("steady");
    group.sample_size(10);
    for n in [12, 20] {
        let superop = build_superoperator(&canonical(), n).unwrap();
        group.bench_function(format!("svd n={n}"), |b| b.iter(|| solve_steady(black_box(&superop)).unwrap()));
    }
    group.finish();
}

fn bench_evolve(c: &mut Criterion) {
    let mut group = c.benchmark_group("evolve");
    group.sample_size(10);
    let rho0 = coherent(16);
    let times: Vec<f64> = (0..=10).map(|k| 0.5 * k as f64).collect();
    group.bench_function("dopri5 n=16 t=5", |b| {
        b.iter(|| evolve(&canonical(), black_box(&rho0), &times, 1e-9).unwrap())
    });
    group.finish();
}

fn bench_wigner(c: &mut Criterion) {
    let mut group = c.benchmark_group("wigner");
    group.sample_size(10);
    let rho = coherent(40);
    let spec = grid();
    group.bench_function("kernel fft n=40", |b| b.iter(|| wigner_transform(black_box(&rho), &spec).unwrap()));
    group.bench_function("characteristic n=40", |b| {
        b.iter(|| wigner_from_characteristic(black_box(&rho), 64, 10.0).unwrap())
    });
    group.finish();
}

fn bench_lyapunov(c: &mut Criterion) {
    let mut group = c.benchmark_group("lyapunov");
    group.sample_size(10);
    group.bench_function("certify n=40", |b| b.iter(|| certify(black_box(&canonical()), 40, 50, 1).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_superoperator, bench_steady, bench_evolve, bench_wigner, bench_lyapunov);
criterion_main!(benches);

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use diffusim::diffusion::{reverse_sample, ScoreField};
use diffusim::rng::RngStream;
use diffusim::{enkf_update, wasserstein2, DiffusionConfig, EmpiricalMeasure, EnkfConfig};
use diffusim_bench::{arctan_model, gaussian_ensemble, paired_ensemble, state_ensemble};

fn score(c: &mut Criterion) {
    let mut group = c.benchmark_group("score");
    for n in [100, 500] {
        let paired = paired_ensemble(n, 10, 1);
        let field = ScoreField::new(
            &paired,
            &[0.3; 10],
            &DiffusionConfig::with_bandwidths(0.2, 0.5),
        )
        .unwrap();
        let x = vec![0.1; 10];
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| field.score(&x, 0.5).unwrap())
        });
    }
    group.finish();
}

fn reverse(c: &mut Criterion) {
    let mut group = c.benchmark_group("reverse_sample");
    group.sample_size(10);
    for n in [50, 100] {
        let paired = paired_ensemble(n, 10, 2);
        let field = ScoreField::new(
            &paired,
            &[0.3; 10],
            &DiffusionConfig::with_bandwidths(0.2, 0.5),
        )
        .unwrap();
        let rng = RngStream::new(3, 0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| reverse_sample(&field, n, &rng).unwrap())
        });
    }
    group.finish();
}

fn w2(c: &mut Criterion) {
    let mut group = c.benchmark_group("wasserstein2");
    group.sample_size(10);
    for (n, m) in [(100, 500), (100, 2000)] {
        let a = EmpiricalMeasure::uniform(gaussian_ensemble(n, 3, 0.0, 4)).unwrap();
        let b = EmpiricalMeasure::uniform(gaussian_ensemble(m, 3, 1.0, 5)).unwrap();
        group.bench_function(format!("{n}x{m}"), |bench| {
            bench.iter(|| wasserstein2(&a, &b).unwrap())
        });
    }
    group.finish();
}

fn enkf(c: &mut Criterion) {
    let mut group = c.benchmark_group("enkf_update");
    let model = arctan_model();
    for (n, d) in [(100, 10), (1000, 20)] {
        let prior = state_ensemble(n, d, 6);
        let y = vec![0.2; d];
        let rng = RngStream::new(7, 0);
        group.bench_function(format!("n{n}-d{d}"), |b| {
            b.iter(|| enkf_update(&prior, &model, &y, &EnkfConfig::default(), &rng).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, score, reverse, w2, enkf);
criterion_main!(benches);

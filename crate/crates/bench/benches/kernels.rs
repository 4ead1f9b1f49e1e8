use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use compscore_core::bounds::{bound_constants, prop2_bound};
use compscore_core::diffusion::{backward_sample, AnalyticScore, DiffusionSchedule, ScoreField};
use compscore_core::experiments::ExperimentConfig;
use compscore_core::{compose_true, SymMatrix};

fn matrices(c: &mut Criterion) {
    let m = SymMatrix::from_rows(&[vec![2.0, 0.3, 0.1], vec![0.3, 1.5, -0.2], vec![0.1, -0.2, 1.0]]).unwrap();
    c.bench_function("jacobi eigen 3x3", |b| b.iter(|| black_box(&m).eigen()));
    c.bench_function("cholesky inverse 3x3", |b| b.iter(|| black_box(&m).cholesky_inverse().unwrap()));
}

fn scores(c: &mut Criterion) {
    let cfg = ExperimentConfig::default();
    let model = cfg.model().unwrap();
    let xs = cfg.observations(50).unwrap();
    let composed = compose_true(&model, &xs, &cfg.schedule).unwrap();
    let points: Vec<f64> = model.prior().sample(1, 1024).into_iter().flatten().collect();
    let mut out = vec![0.0; points.len()];
    c.bench_function("composed score n=50, 1024 points", |b| {
        b.iter(|| composed.evaluate_batch(black_box(&points), 0.5, &mut out))
    });
    c.bench_function("compose_true n=50", |b| {
        b.iter(|| compose_true(&model, black_box(&xs), &cfg.schedule).unwrap())
    });
    c.bench_function("bound n=50", |b| {
        b.iter(|| {
            let k = bound_constants(&model, black_box(&xs), 0.5).unwrap();
            prop2_bound(&k.with_errors(0.001, 0.0, 0.1, 0.0)).unwrap()
        })
    });
}

fn sampler(c: &mut Criterion) {
    let cfg = ExperimentConfig::default();
    let target = cfg.model().unwrap().posterior(&cfg.observations(1).unwrap()[0]).unwrap();
    let s = DiffusionSchedule::default();
    let field = AnalyticScore::new(target, s);
    let mut group = c.benchmark_group("backward sampler");
    group.sample_size(10);
    group.bench_function("1000 steps, 1024 trajectories", |b| {
        b.iter_batched(|| 0u64, |seed| backward_sample(&s, &field, seed, 1024).unwrap(), BatchSize::SmallInput)
    });
    group.finish();
}

criterion_group!(benches, matrices, scores, sampler);
criterion_main!(benches);

//! Sequential vs rayon execution of the two data-parallel hot paths: Fisher
//! estimation and chunked evaluation.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synergy_core::consolidation::estimate_fisher;
use synergy_core::data::synthetic_gaussians;
use synergy_core::metrics::evaluate;
use synergy_core::models::{build_mlp, build_small_cnn};
use synergy_core::par::Exec;
use synergy_core::streams::EvalSet;
use synergy_core::Tensor;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn fisher(c: &mut Criterion) {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let n = 128;
    let model = build_small_cnn::<f32>(1, 28, 10, 3).unwrap();
    let x = Tensor::new(vec![n, 1, 28, 28], (0..n * 784).map(|_| r.random::<f32>()).collect()).unwrap();
    let y: Vec<usize> = (0..n).map(|_| r.random_range(0..10)).collect();
    let mut g = c.benchmark_group("fisher_cnn_128");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| estimate_fisher(&model, &x, &y, 16, exec).unwrap())
        });
    }
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let data = synthetic_gaussians(10, 784, 500, 3.0, 2).unwrap();
    let set = EvalSet { name: "all".into(), entries: (0..data.len()).map(|i| (i, 0.0)).collect() };
    let model = build_mlp::<f32>(784, 100, 10, 4).unwrap();
    let mut g = c.benchmark_group("evaluate_mlp_5000");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| evaluate(&model, &data, &set, 500, false, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, fisher, evaluation);
criterion_main!(benches);

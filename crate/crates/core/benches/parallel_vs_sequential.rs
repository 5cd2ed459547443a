use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refcal::embeddings::EmbeddingBatch;
use refcal::exec::ExecMode;
use refcal::losses::{softmax_rows, supcon_loss_with};
use refcal::metrics::{smece_with, ProbabilityBatch};
use refcal::verify::bound_sweep;

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn embedding_batch(n: usize, d: usize, k: usize) -> EmbeddingBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let raw = Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0));
    let labels = (0..n).map(|i| i % k).collect();
    EmbeddingBatch::from_raw(raw.view(), labels, k).expect("valid batch")
}

fn probability_batch(n: usize, k: usize) -> ProbabilityBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let logits = Array2::from_shape_simple_fn((n, k), || rng.random_range(-3.0..3.0));
    let labels = (0..n).map(|_| rng.random_range(0..k)).collect();
    ProbabilityBatch::new(softmax_rows(&logits), labels).expect("stochastic rows")
}

fn supcon(c: &mut Criterion) {
    let mut group = c.benchmark_group("supcon_with_gradient");
    for n in [128, 512] {
        let batch = embedding_batch(n, 32, 8);
        for (name, mode) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &batch, |b, batch| {
                b.iter(|| supcon_loss_with(batch, 0.1, true, mode).unwrap())
            });
        }
    }
    group.finish();
}

fn bound(c: &mut Criterion) {
    let mut group = c.benchmark_group("bound_sweep_50_batches");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(name, |b| b.iter(|| bound_sweep(50, 1234, mode)));
    }
    group.finish();
}

fn smooth(c: &mut Criterion) {
    let mut group = c.benchmark_group("smece");
    for n in [1000, 5000] {
        let batch = probability_batch(n, 10);
        for (name, mode) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &batch, |b, batch| {
                b.iter(|| smece_with(batch, 0.05, mode).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, supcon, bound, smooth);
criterion_main!(benches);

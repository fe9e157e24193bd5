//! Sequential vs rayon kernels, plus end-to-end batch prediction.
//!
//! `cargo bench -p dgm-dte` compares `matmul_seq` and `matmul_par` side by
//! side. The KDE grid and prediction groups go through the feature-gated
//! dispatch, so compare them across `--no-default-features` runs.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dgm_dte::data::{generate, labels, split_temporal, GeneratorSpec, SplitSpec};
use dgm_dte::imbalance::estimate_density;
use dgm_dte::model::{predict_orders, DgmConfig, DgmModel, PreparedData};
use dgm_dte::numerics::kernels;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

fn matmul(c: &mut Criterion) {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let mut g = c.benchmark_group("matmul");
    for &(m, k, n) in &[(256, 64, 64), (2048, 128, 32), (512, 512, 512)] {
        let a = random(&mut r, m * k);
        let b = random(&mut r, k * n);
        let id = format!("{m}x{k}x{n}");
        g.bench_with_input(BenchmarkId::new("seq", &id), &(), |bch, _| {
            bch.iter(|| kernels::matmul_seq(black_box(&a), black_box(&b), m, k, n))
        });
        #[cfg(feature = "parallel")]
        g.bench_with_input(BenchmarkId::new("par", &id), &(), |bch, _| {
            bch.iter(|| kernels::matmul_par(black_box(&a), black_box(&b), m, k, n))
        });
    }
    g.finish();
}

fn kde_grid(c: &mut Criterion) {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let tail: Vec<f64> = (0..1000).map(|_| r.random_range(96.0..480.0)).collect();
    c.bench_function("kde_grid_1000_tail_labels", |b| b.iter(|| estimate_density(black_box(&tail), None).unwrap()));
}

fn batch_prediction(c: &mut Criterion) {
    let orders = generate(&GeneratorSpec::default()).unwrap();
    let split = split_temporal(&orders, &SplitSpec::default()).unwrap();
    let y = labels(&split.train);
    let cfg = DgmConfig { output_scale: Some(y.iter().sum::<f64>() / y.len() as f64), ..DgmConfig::default() };
    let data = PreparedData::new(&cfg, &split.train, &split.val).unwrap();
    let model = DgmModel::new(&cfg, data.dims);
    let store = model.init(&mut ChaCha8Rng::seed_from_u64(0));
    let idx = data.index(&split.test);
    let mut g = c.benchmark_group("predict");
    g.sample_size(10);
    g.bench_function(format!("full_{}_orders", idx.len()), |b| {
        b.iter(|| predict_orders(&model, &store, &data.tensors, black_box(&idx)))
    });
    g.finish();
}

criterion_group!(benches, matmul, kde_grid, batch_prediction);
criterion_main!(benches);

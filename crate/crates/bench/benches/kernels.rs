use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use labgatr_core::autodiff::{ParameterStore, Tape, Tensor};
use labgatr_core::layers::{EquiLinear, GeometricAttention};
use labgatr_core::model::{make_toy_dataset, LabGatr, ModelConfig, TaskPreset, ToyKind};
use labgatr_core::pga::{geometric_product, Multivector, Vec3};
use labgatr_core::tokenizer::{build_plan, farthest_point_sampling, knn, DEFAULT_EPSILON};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect()
}

fn product(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut mv = || Multivector::from_slice(&(0..16).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()).unwrap();
    let (a, b) = (mv(), mv());
    c.bench_function("geometric_product", |bench| bench.iter(|| geometric_product(black_box(&a), black_box(&b))));
}

fn layers(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (tokens, channels) = (256, 8);
    let x = random_tensor(&mut rng, vec![tokens, channels, 16]);
    let mut store = ParameterStore::new();
    let lin = EquiLinear::new("lin", channels, channels);
    lin.init(&mut store, &mut rng, false).unwrap();
    let attn = GeometricAttention::new("attn", channels, 4).unwrap();
    attn.init(&mut store, &mut rng, false).unwrap();

    c.bench_function("equi_linear_256x8", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let v = tape.leaf(x.clone());
            lin.forward(&mut tape, &store, v).unwrap()
        })
    });
    c.bench_function("attention_256x8_forward_backward", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let v = tape.leaf(x.clone());
            let out = attn.forward(&mut tape, &store, v).unwrap();
            let total = tape.sum(out).unwrap();
            tape.backward(total).unwrap()
        })
    });
}

fn tokenizer(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut group = c.benchmark_group("tokenizer");
    for n in [2_000, 20_000] {
        let cloud = random_cloud(&mut rng, n);
        group.bench_with_input(BenchmarkId::new("fps_10pct", n), &cloud, |bench, cloud| {
            bench.iter(|| farthest_point_sampling(cloud, n / 10, 0).unwrap())
        });
        let coarse: Vec<Vec3> = cloud.iter().step_by(10).copied().collect();
        group.bench_with_input(BenchmarkId::new("knn3", n), &cloud, |bench, cloud| {
            bench.iter(|| knn(cloud, &coarse, 3))
        });
        group.bench_with_input(BenchmarkId::new("build_plan", n), &cloud, |bench, cloud| {
            bench.iter(|| build_plan(cloud, 0.1, 3, 0, DEFAULT_EPSILON).unwrap())
        });
    }
    group.finish();
}

fn model(c: &mut Criterion) {
    let cfg = ModelConfig::preset(TaskPreset::SurfaceWss);
    let net = LabGatr::new(cfg).unwrap();
    let sample = &make_toy_dataset(ToyKind::Surface, 1, 0)[0];
    let prepared = net.prepare(sample).unwrap();
    let store = net.init_params(0).unwrap();
    c.bench_function("surface_forward_backward", |bench| bench.iter(|| net.loss_and_grads(&store, &prepared).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = product, layers, tokenizer, model
}
criterion_main!(benches);

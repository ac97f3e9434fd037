use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;
use toonwarp_core::perceiver::{perceiver_backward, perceiver_forward, TinyPerceiver};
use toonwarp_core::{smooth_loss, upsample, warp, warp_backward, CoarseField, ImageBuffer};

fn image(n: usize) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    ImageBuffer::from_fn(n, n, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap()
}

fn field() -> CoarseField {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    CoarseField::from_fn(32, 32, |_, _| {
        (rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0))
    })
    .unwrap()
}

fn warping(c: &mut Criterion) {
    let coarse = field();
    let mut group = c.benchmark_group("warp");
    for n in [128, 256, 512] {
        let img = image(n);
        let dense = upsample(&coarse, n, n).unwrap();
        group.bench_with_input(BenchmarkId::new("forward", n), &n, |b, _| {
            b.iter(|| warp(black_box(&img), black_box(&dense)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("backward", n), &n, |b, _| {
            b.iter(|| warp_backward(black_box(&img), black_box(&dense), black_box(&img)).unwrap())
        });
    }
    group.finish();
}

fn field_ops(c: &mut Criterion) {
    let coarse = field();
    c.bench_function("upsample 32->256", |b| {
        b.iter(|| upsample(black_box(&coarse), 256, 256).unwrap())
    });
    let dense = upsample(&coarse, 256, 256).unwrap();
    c.bench_function("smooth_loss 256", |b| {
        b.iter(|| smooth_loss(black_box(&dense)))
    });
}

fn perceiver(c: &mut Criterion) {
    let mut model = TinyPerceiver::reference(3);
    // non-zero last layer so the backward pass does real work
    for (k, p) in model.params_mut().iter_mut().enumerate() {
        if *p == 0.0 {
            *p = ((k % 7) as f32 - 3.0) * 0.01;
        }
    }
    let img = image(256);
    c.bench_function("perceiver forward", |b| {
        b.iter(|| perceiver_forward(black_box(&model), black_box(&img)).unwrap())
    });
    let (_, cache) = perceiver_forward(&model, &img).unwrap();
    let upstream = vec![1e-3; 32 * 32 * 2];
    c.bench_function("perceiver backward", |b| {
        b.iter(|| {
            perceiver_backward(black_box(&model), black_box(&cache), black_box(&upstream)).unwrap()
        })
    });
}

criterion_group!(benches, warping, field_ops, perceiver);
criterion_main!(benches);

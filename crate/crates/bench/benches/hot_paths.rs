//! Throughput of the three per-sample hot paths at the published desk
//! architecture: pixel encoding, the spiking forward pass, and the full
//! backward pass with suppression.

use criterion::{criterion_group, criterion_main, Criterion};
use imsnn_core::backprop::{backward_pass, cross_entropy_potential_seed};
use imsnn_core::encoding::encode;
use imsnn_core::{EncoderConfig, InitConfig, Network, SuppressionMode, Variant};

fn synthetic_pixels(n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i * 37) % 256) as f64 / 255.0).collect()
}

fn bench_hot_paths(c: &mut Criterion) {
    let enc = EncoderConfig::default();
    let pixels = synthetic_pixels(784);
    c.bench_function("encode 784 pixels / 100 steps", |b| {
        b.iter(|| encode(&pixels, &enc).unwrap())
    });

    let net = Network::init("784-128-10", Variant::Imsnn, 7, &InitConfig::default()).unwrap();
    let raster = encode(&pixels, &enc).unwrap();
    let mut caches = net.make_caches(enc.steps as u32 + 1);
    c.bench_function("forward 784-128-10 / 100 steps", |b| {
        b.iter(|| net.forward_cached(&raster, 0.99, 1.0, &mut caches).unwrap())
    });

    let fwd = net.forward_cached(&raster, 0.99, 1.0, &mut caches).unwrap();
    let seed = cross_entropy_potential_seed(fwd.output_potentials(), 3).unwrap();
    c.bench_function("backward 784-128-10 / 100 steps", |b| {
        b.iter(|| {
            backward_pass(
                &net,
                &fwd,
                &seed,
                SuppressionMode::Imsnn,
                0.99,
                1.0,
                10.0,
                &mut caches,
            )
        })
    });
}

criterion_group!(benches, bench_hot_paths);
criterion_main!(benches);

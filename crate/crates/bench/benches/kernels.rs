use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use softtarget_bench::*;
use softtarget_core::analysis::colabel_covariance;
use softtarget_core::nn::{cross_entropy, Mode};
use softtarget_core::optim::{AdadeltaConfig, AdadeltaState};
use softtarget_core::softtarget::{SoftTargetConfig, SoftTargetState};
use softtarget_core::{Matrix, Rng};
use std::hint::black_box;

fn matmul(c: &mut Criterion) {
    let mut g = c.benchmark_group("matmul");
    let x = uniform(128, 784, 1);
    let w = uniform(784, 256, 2);
    let d = uniform(128, 256, 3);
    g.throughput(Throughput::Elements((128 * 784 * 256) as u64));
    g.bench_function("128x784 * 784x256", |b| {
        b.iter(|| black_box(&x).matmul(&w).unwrap())
    });
    g.bench_function("t_matmul 784x128 * 128x256", |b| {
        b.iter(|| black_box(&x).t_matmul(&d).unwrap())
    });
    g.bench_function("matmul_t 128x256 * 256x784", |b| {
        b.iter(|| black_box(&d).matmul_t(&w).unwrap())
    });
    g.finish();
}

fn train_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("train_step");
    let x = uniform(128, MNIST_FEATURES, 4);
    let t = one_hot_rows(128, MNIST_CLASSES);
    for (name, dropout) in [("3x256", 0.0), ("3x256+dropout", 0.5)] {
        let mut net = mlp(3, 256, dropout);
        net.set_mode(Mode::Train);
        let mut rng = Rng::new(5);
        g.bench_function(BenchmarkId::new("forward_backward", name), |b| {
            b.iter(|| {
                let (p, trace) = net.forward(&x, &mut rng).unwrap();
                let (_, grad) = cross_entropy(&p, &t).unwrap();
                net.backward(&trace, &grad).unwrap()
            })
        });
    }
    let net = mlp(3, 256, 0.0);
    g.bench_function("predict 3x256 batch 2048", |b| {
        let x = uniform(2048, MNIST_FEATURES, 6);
        b.iter(|| net.predict(black_box(&x)).unwrap())
    });
    g.finish();
}

fn adadelta(c: &mut Criterion) {
    let cfg = AdadeltaConfig::default();
    let grads = uniform(784, 256, 7);
    let mut params = Matrix::zeros(784, 256);
    let mut state = AdadeltaState::new(784, 256);
    c.bench_function("adadelta step 784x256", |b| {
        b.iter(|| state.step(&cfg, &mut params, black_box(&grads)).unwrap())
    });
}

fn softtarget(c: &mut Criterion) {
    let mut g = c.benchmark_group("softtarget");
    let n = 60_000;
    let cfg = SoftTargetConfig {
        beta: 0.7,
        gamma: 0.5,
        burn_in: 2,
        epochs_per_step: 2,
        total_epochs: 100,
    };
    let p0 = distributions(n, MNIST_CLASSES, 8);
    let p1 = distributions(n, MNIST_CLASSES, 9);
    let hard = one_hot_rows(n, MNIST_CLASSES);
    let mut state = SoftTargetState::new(p0, cfg).unwrap();
    g.throughput(Throughput::Elements(n as u64));
    g.bench_function("update_ema 60000x10", |b| {
        b.iter(|| state.update_ema(black_box(&p1)).unwrap())
    });
    g.bench_function("blend_targets 60000x10", |b| {
        b.iter(|| state.blend_targets(black_box(&hard)).unwrap())
    });
    g.finish();
}

fn covariance(c: &mut Criterion) {
    let p = distributions(10_000, MNIST_CLASSES, 10);
    c.bench_function("colabel_covariance 10000x10", |b| {
        b.iter(|| colabel_covariance(black_box(&p)).unwrap())
    });
}

criterion_group!(benches, matmul, train_step, adadelta, softtarget, covariance);
criterion_main!(benches);

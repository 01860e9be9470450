use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strider_bench::standing_walker;
use strider_core::algo::{quantile_regression_loss, quantile_value_loss};
use strider_core::nn::{Activation, Mlp, QuantileLevels};
use strider_core::sim::{self, PHYSICS_DT};

fn physics(c: &mut Criterion) {
    let (model, state, torque) = standing_walker();
    c.bench_function("sim_step", |b| b.iter(|| sim::step(&model, black_box(&state), black_box(&torque), PHYSICS_DT).unwrap()));
    c.bench_function("control_step_20_substeps", |b| {
        b.iter(|| {
            let mut s = state.clone();
            for _ in 0..20 {
                let tau = sim::pd_torque(&torque, &s.q, &s.qd, &model).unwrap();
                s = sim::step(&model, &s, &tau, PHYSICS_DT).unwrap().0;
            }
            s
        })
    });
}

fn networks(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = Mlp::new(&[33, 64, 64, 6], Activation::Elu, Activation::Identity, 0.01, &mut rng).unwrap();
    let x = Array2::from_shape_fn((256, 33), |_| rng.random_range(-1.0..1.0));
    let upstream = Array2::from_elem((256, 6), 1.0);
    c.bench_function("mlp_forward_256", |b| b.iter(|| net.forward(black_box(x.view())).unwrap()));
    c.bench_function("mlp_forward_backward_256", |b| {
        b.iter_batched(
            || net.clone(),
            |mut n| {
                let cache = n.forward(x.view()).unwrap();
                n.backward(&cache, upstream.view()).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

fn losses(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let levels = QuantileLevels::uniform(32).unwrap();
    let pred: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
    let targets: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
    c.bench_function("quantile_value_loss_32", |b| {
        b.iter(|| quantile_value_loss(black_box(&pred), black_box(&targets), levels.midpoints()))
    });
    c.bench_function("quantile_regression_loss_32", |b| {
        b.iter(|| quantile_regression_loss(black_box(&pred), black_box(&targets), levels.midpoints()))
    });
}

criterion_group!(benches, physics, networks, losses);
criterion_main!(benches);

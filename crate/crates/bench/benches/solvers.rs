use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use ctmdp::models::{self, UpgradeQueueParams};
use ctmdp::{chain, discounted};

fn params() -> UpgradeQueueParams {
    UpgradeQueueParams {
        lambda1: 0.3,
        lambda2: 0.3,
        mu1: 1.0,
        mu2: 1.0,
        lambda_t: 0.2,
        h1: 1.0,
        h2: 2.0,
        c_transfer: 1.0,
        n: 20,
    }
}

fn bench_solve_optimal(c: &mut Criterion) {
    let model = models::build_upgrade_queue(&params()).unwrap();
    c.bench_function("solve_optimal n=20 alpha=0.1", |b| {
        b.iter(|| {
            discounted::solve_optimal(black_box(&model), 0.1, 1e-9, 1_000_000).unwrap()
        })
    });
}

fn bench_first_passage(c: &mut Criterion) {
    let model = models::build_upgrade_queue(&params()).unwrap();
    let ps = models::ps_policy(&model).unwrap();
    let q = model.induced_generator(&ps).unwrap();
    let cost = model.cost_vector(&ps).unwrap();
    c.bench_function("first_passage n=20 to origin", |b| {
        b.iter(|| chain::first_passage(black_box(&q), &cost, &[0]).unwrap())
    });
}

criterion_group!(benches, bench_solve_optimal, bench_first_passage);
criterion_main!(benches);

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use proxnewt::{pg_baseline, solve, LinearMap, Regularizer, SolverConfig};
use proxnewt_bench::{model_at_start, randn, sparse_instance};

fn operators(c: &mut Criterion) {
    let inst = sparse_instance(4096, 512, 1);
    let a = &inst.problem.smooth.a;
    let x = randn(4096, 2);
    let y = randn(512, 3);
    c.bench_function("dct apply n=4096", |b| b.iter(|| a.apply(black_box(&x))));
    c.bench_function("dct adjoint n=4096", |b| {
        b.iter(|| a.adjoint_apply(black_box(&y)))
    });

    let haar = LinearMap::haar2d(64, 4);
    let blur = LinearMap::gaussian_blur2d(64, 4, 4.0);
    let img = randn(4096, 4);
    c.bench_function("haar apply 64x64", |b| b.iter(|| haar.apply(black_box(&img))));
    c.bench_function("blur apply 64x64", |b| b.iter(|| blur.apply(black_box(&img))));
}

fn proxes(c: &mut Criterion) {
    let v = randn(4096, 5);
    let l1 = Regularizer::l1(0.3);
    let groups = Regularizer::group_l2_blocks(0.3, 4096, 16);
    c.bench_function("l1 prox n=4096", |b| b.iter(|| l1.prox(0.7, black_box(&v))));
    c.bench_function("group prox n=4096", |b| {
        b.iter(|| groups.prox(0.7, black_box(&v)))
    });
    let frame = Regularizer::analysis_l1(0.01, std::sync::Arc::new(LinearMap::haar2d(64, 4)));
    c.bench_function("analysis prox 64x64", |b| {
        b.iter(|| frame.prox(0.7, black_box(&v)))
    });
}

fn model_products(c: &mut Criterion) {
    let inst = sparse_instance(4096, 512, 1);
    let model = model_at_start(&inst);
    let v = randn(4096, 6);
    c.bench_function("model G apply n=4096", |b| {
        b.iter(|| model.apply_g(black_box(&v)))
    });
}

fn solvers(c: &mut Criterion) {
    let inst = sparse_instance(512, 128, 7);
    let cfg = SolverConfig {
        eps0: 1e-5,
        seed: 7,
        ..SolverConfig::default()
    };
    let mut group = c.benchmark_group("solvers");
    group.sample_size(20);
    group.bench_function("proximal newton n=512", |b| {
        b.iter(|| solve(&inst.problem, inst.x_init.clone(), &cfg).unwrap())
    });
    group.bench_function("proximal gradient n=512", |b| {
        b.iter(|| pg_baseline(&inst.problem, inst.x_init.clone(), &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, operators, proxes, model_products, solvers);
criterion_main!(benches);

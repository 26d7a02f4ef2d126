use affourier_core::catalog::{lattice_control, proximal_pair};
use affourier_core::fourier::{chaos_sample, fourier_mc, RecursiveEvaluator};
use affourier_core::renewal::{renewal_et, TestFunction};
use affourier_core::sphere::{SpherePoint, WalkLaw};
use affourier_core::transfer::{CircleGrid, TransferOperator};
use affourier_core::words::{stopping_set, DEFAULT_NODE_CAP};
use affourier_core::Complex64;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn fourier(c: &mut Criterion) {
    let s = proximal_pair();
    let eval = RecursiveEvaluator::new(&s);
    let mut g = c.benchmark_group("fourier_recursive");
    for r in [16.0, 256.0, 4096.0] {
        g.bench_with_input(BenchmarkId::from_parameter(r), &r, |b, &r| {
            b.iter(|| eval.eval(black_box(&[0.6 * r, 0.8 * r]), 1e-3).unwrap())
        });
    }
    g.finish();

    let lattice = lattice_control();
    let lat = RecursiveEvaluator::new(&lattice);
    c.bench_function("fourier_recursive_grouped_lattice", |b| {
        b.iter(|| lat.eval(black_box(&[6561.0, 0.0]), 1e-9).unwrap())
    });

    let pool = chaos_sample(&s, 100_000, 1, s.default_burn_in());
    c.bench_function("fourier_mc_1e5", |b| b.iter(|| fourier_mc(&pool, black_box(&[30.0, -40.0])).unwrap()));
    c.bench_function("chaos_sample_1e5", |b| b.iter(|| chaos_sample(&s, 100_000, black_box(2), 64)));
}

fn words(c: &mut Criterion) {
    let s = proximal_pair();
    c.bench_function("stopping_set_t4", |b| {
        b.iter(|| stopping_set(&s, black_box(&[0.6, 0.8]), 4.0, DEFAULT_NODE_CAP).unwrap())
    });
}

fn operators(c: &mut Criterion) {
    let law = WalkLaw::from_system(&proximal_pair());
    let op = TransferOperator::new(&law, 2048).unwrap();
    let grid = CircleGrid::from_fn(2048, |theta| Complex64::new(theta.cos(), 0.0)).unwrap();
    c.bench_function("transfer_apply_2048", |b| {
        b.iter(|| op.apply(black_box(Complex64::new(0.0, 10.0)), &grid).unwrap())
    });

    let x = SpherePoint::from_angle(0.4);
    let bump = TestFunction::bump(1.0);
    c.bench_function("renewal_et_t10_1e4", |b| {
        b.iter(|| renewal_et(&law, &bump, &x, black_box(10.0), 10_000, 3).unwrap())
    });
}

criterion_group!(benches, fourier, words, operators);
criterion_main!(benches);

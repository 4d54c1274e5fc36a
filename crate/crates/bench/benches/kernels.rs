use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ncprob::cumulants::{cumulants_to_moments, moments_to_cumulants, Species};
use ncprob::flow::rk4_flow;
use ncprob::ncseries::h_series;
use ncprob::partitions::{enumerate, order_count};
use ncprob::{HalfPlanePoint, NCSeries, PartitionClass};
use ncprob_bench::{generator, moments};

fn partitions(c: &mut Criterion) {
    let mut g = c.benchmark_group("noncrossing");
    for n in [6, 8, 10] {
        g.bench_with_input(BenchmarkId::new("enumerate", n), &n, |b, &n| {
            b.iter(|| enumerate(black_box(n), PartitionClass::NonCrossing).unwrap())
        });
    }
    let all = enumerate(10, PartitionClass::NonCrossing).unwrap();
    g.bench_function("order_count/10", |b| {
        b.iter(|| all.iter().map(|p| order_count(p).unwrap()).sum::<u64>())
    });
    g.finish();
}

fn transforms(c: &mut Criterion) {
    let mut g = c.benchmark_group("cumulants_to_moments");
    g.sample_size(20);
    for (d, order) in [(1, 8), (2, 5), (3, 4)] {
        let cum = moments_to_cumulants(&moments(d, order), Species::Monotone).unwrap();
        g.bench_with_input(BenchmarkId::new(format!("d{d}"), order), &cum, |b, cum| {
            b.iter(|| cumulants_to_moments(black_box(cum)).unwrap())
        });
    }
    g.finish();
}

fn compose(c: &mut Criterion) {
    let mut g = c.benchmark_group("compose");
    g.sample_size(20);
    for (d, order) in [(1, 8), (2, 5)] {
        let f = h_series(&moments(d, order));
        g.bench_with_input(BenchmarkId::new(format!("d{d}"), order), &f, |b, f| {
            b.iter(|| NCSeries::compose(black_box(f), black_box(f)).unwrap())
        });
    }
    g.finish();
}

fn flow(c: &mut Criterion) {
    let mut g = c.benchmark_group("rk4_flow");
    for d in [1, 2, 4] {
        let gen = generator(d);
        let start = HalfPlanePoint::scalar_imag(2.0, d, 1).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, _| {
            b.iter(|| rk4_flow(&gen, black_box(&start), 1.0, 0.05).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, partitions, transforms, compose, flow);
criterion_main!(benches);

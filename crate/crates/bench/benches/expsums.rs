use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use circlelab_bench::{quartic_system, separable_system};
use circlelab_core::expsums::{complete_sum_s, minor_arc_sup, weyl_sum_t, ArcPoint};

fn weyl_sums(c: &mut Criterion) {
    let mut group = c.benchmark_group("weyl_sum_t");
    let pt = ArcPoint::new(0.318_309_7, vec![0.141_421_356]);
    let coupled = quartic_system();
    let separable = separable_system(12);
    group.bench_function("coupled_x20", |b| b.iter(|| weyl_sum_t(&coupled, black_box(&pt), 20, u64::MAX).unwrap()));
    group.bench_function("separable12_x1000", |b| b.iter(|| weyl_sum_t(&separable, black_box(&pt), 1000, u64::MAX).unwrap()));
    group.finish();
}

fn complete_sums(c: &mut Criterion) {
    let sys = separable_system(6);
    let mut group = c.benchmark_group("complete_sum_s");
    for q in [16u64, 49] {
        group.bench_with_input(BenchmarkId::from_parameter(q), &q, |b, &q| b.iter(|| complete_sum_s(&sys, q, 1, &[1], u64::MAX).unwrap()));
    }
    group.finish();
}

fn minor_arcs(c: &mut Criterion) {
    let mut group = c.benchmark_group("minor_arc_sup");
    group.sample_size(10);
    group.bench_function("j3_x250", |b| b.iter(|| minor_arc_sup(3, black_box(250), 250f64.sqrt(), 16, 4, 1).unwrap()));
    group.finish();
}

criterion_group!(benches, weyl_sums, complete_sums, minor_arcs);
criterion_main!(benches);

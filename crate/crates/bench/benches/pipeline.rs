use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use railsched_core::factory::{make_appendix_instance, make_family_instance, FamilySpec};
use railsched_core::ilp::solve_instance;
use railsched_core::ising::to_ising;
use railsched_core::qubo::{assemble, PenaltyConfig};
use railsched_core::samplers::{enumerate_spectrum, simulated_anneal, AnnealConfig, DEFAULT_ENUMERATION_CAP};
use railsched_core::compute_time_windows;

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assemble");
    for trains in [2usize, 6, 11] {
        let spec = FamilySpec { train_count: trains, d_max: 6, disturbed: trains > 1, seed: 0 };
        let inst = make_family_instance(&spec).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(trains), &inst, |b, inst| {
            b.iter(|| {
                let w = compute_time_windows(inst).unwrap();
                assemble(black_box(inst), &w, &PenaltyConfig::split()).unwrap()
            })
        });
    }
    group.finish();
}

fn enumeration(c: &mut Criterion) {
    let inst = make_appendix_instance();
    let w = compute_time_windows(&inst).unwrap();
    let q = assemble(&inst, &w, &PenaltyConfig::overlapping()).unwrap();
    c.bench_function("enumerate_appendix", |b| {
        b.iter(|| enumerate_spectrum(black_box(&q), DEFAULT_ENUMERATION_CAP).unwrap())
    });
}

fn annealing(c: &mut Criterion) {
    let inst = make_appendix_instance();
    let w = compute_time_windows(&inst).unwrap();
    let model = to_ising(&assemble(&inst, &w, &PenaltyConfig::split()).unwrap());
    let cfg = AnnealConfig { shots: 100, sweeps: 1000, beta_range: None, seed: 1 };
    c.bench_function("anneal_appendix_100x1000", |b| {
        b.iter(|| simulated_anneal(black_box(&model), &cfg).unwrap())
    });
}

fn ilp(c: &mut Criterion) {
    let mut group = c.benchmark_group("ilp");
    group.bench_function("appendix", |b| {
        let inst = make_appendix_instance();
        b.iter(|| solve_instance(black_box(&inst)).unwrap())
    });
    let spec = FamilySpec { train_count: 6, d_max: 6, disturbed: true, seed: 0 };
    let inst = make_family_instance(&spec).unwrap();
    group.bench_function("family_6_disturbed", |b| b.iter(|| solve_instance(black_box(&inst)).unwrap()));
    group.finish();
}

criterion_group!(benches, assembly, enumeration, annealing, ilp);
criterion_main!(benches);

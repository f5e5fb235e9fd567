use cachemimo::cache::project_cache;
use cachemimo::precoder::{comp_initial_point, solve_dual, DualOptions, LinkView, Receivers, SpOptions};
use cachemimo::sim::{run_scheme, Scheme, SimOptions};
use cachemimo::{algorithm_sp, Mode, SystemConfig};
use cachemimo_bench::{instance, raw_cache_control};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn sp(c: &mut Criterion) {
    let mut g = c.benchmark_group("algorithm_sp");
    for users in [2, 3] {
        let (h, rc) = instance(1, users, 3, 2, 2);
        let opts = SpOptions::default();
        g.bench_with_input(BenchmarkId::new("coordinated", users), &users, |b, _| {
            b.iter(|| algorithm_sp(black_box(&h), &rc, Mode::Coordinated, None, &opts).unwrap())
        });
        let coord = algorithm_sp(&h, &rc, Mode::Coordinated, None, &opts).unwrap();
        let start = comp_initial_point(&coord.v, &h).unwrap();
        g.bench_with_input(BenchmarkId::new("comp", users), &users, |b, _| {
            b.iter(|| algorithm_sp(black_box(&h), &rc, Mode::Comp, Some(&start), &opts).unwrap())
        });
    }
    g.finish();
}

fn dual(c: &mut Criterion) {
    let (h, rc) = instance(2, 3, 3, 2, 2);
    let coord = algorithm_sp(&h, &rc, Mode::Coordinated, None, &SpOptions::default()).unwrap();
    let view = LinkView::new(&h, Mode::Coordinated);
    let rx = Receivers::compute(&view, &coord.v).unwrap();
    c.bench_function("solve_dual/newton", |b| {
        b.iter(|| solve_dual(&view, black_box(&rx), &rc, &DualOptions::default(), None).unwrap())
    });
}

fn projection(c: &mut Criterion) {
    let files = vec![1.0; 100];
    let raw = raw_cache_control(3, 100);
    c.bench_function("project_cache/100", |b| {
        b.iter(|| project_cache(black_box(&raw), &files, 20.0).unwrap())
    });
}

fn simulation(c: &mut Criterion) {
    let cfg = SystemConfig {
        users: 2,
        subcarriers: 2,
        urp_hold: 20,
        ..SystemConfig::default()
    };
    let opts = SimOptions::from_config(&cfg);
    let mut g = c.benchmark_group("run_scheme_40_slots");
    g.sample_size(10);
    for scheme in [Scheme::Proposed, Scheme::Coordinated] {
        g.bench_function(scheme.name(), |b| {
            b.iter(|| run_scheme(&cfg, scheme, 40, &opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, sp, dual, projection, simulation);
criterion_main!(benches);

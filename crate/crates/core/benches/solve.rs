use criterion::{criterion_group, criterion_main, Criterion};

use ces_core::model::{TimeGrid, UserProfile};
use ces_core::network::linearization_report;
use ces_core::optimizer::{compare_variants, AUDIT_TOL};
use ces_core::par;
use ces_core::scenario::{paper_like, Scenario};

/// The paper-like day at 15-minute resolution, to keep iterations short.
fn quarter_hourly() -> Scenario {
    let full = paper_like().unwrap();
    let coarse = |v: &[f64]| v.chunks(3).map(|c| c.iter().sum()).collect::<Vec<f64>>();
    let users = full
        .users
        .iter()
        .map(|u| UserProfile::new(u.id.clone(), u.bus, u.kind, coarse(&u.demand), coarse(&u.pv), None).unwrap())
        .collect();
    let prices = full.prices.iter().step_by(3).copied().collect();
    let grid = TimeGrid::new(96, 0.25).unwrap();
    Scenario::new(full.feeder.spec().clone(), users, prices, full.ces, grid, full.weights).unwrap()
}

fn mode() -> &'static str {
    if par::is_parallel() {
        "rayon"
    } else {
        "sequential"
    }
}

fn bench_validation(c: &mut Criterion) {
    let sc = paper_like().unwrap();
    let inj = sc.injections(None).unwrap();
    let mut g = c.benchmark_group("linearization_report_288");
    g.bench_function(mode(), |b| b.iter(|| linearization_report(&sc.feeder, &sc.paths, &inj)));
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        g.bench_function("rayon_1_thread", |b| {
            b.iter(|| pool.install(|| linearization_report(&sc.feeder, &sc.paths, &inj)))
        });
    }
    g.finish();
}

fn bench_compare(c: &mut Criterion) {
    let sc = quarter_hourly();
    let w = sc.weights.resolve().unwrap();
    let mut g = c.benchmark_group("compare_variants_96");
    g.sample_size(10);
    g.bench_function(mode(), |b| b.iter(|| compare_variants(&sc, &w, AUDIT_TOL).unwrap()));
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        g.bench_function("rayon_1_thread", |b| {
            b.iter(|| pool.install(|| compare_variants(&sc, &w, AUDIT_TOL).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_validation, bench_compare);
criterion_main!(benches);

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use revshare_core::experiments::{sample_instance, BaseConfig};
use revshare_core::stability::ScanOptions;
use revshare_core::*;

fn instance(n: usize) -> GameInstance {
    sample_instance(
        &BaseConfig {
            n,
            ..Default::default()
        },
        1,
    )
    .unwrap()
}

fn ese(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_ese_foc");
    for n in [5, 20, 100, 1000] {
        let g = instance(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &g, |b, g| {
            b.iter(|| solve_ese_foc(g, black_box(0.5), &EseOptions::default()).unwrap())
        });
    }
    group.finish();

    let g = instance(20);
    c.bench_function("solve_ese_dynamics_beta/20", |b| {
        b.iter(|| solve_ese_dynamics_beta(&g, black_box(0.5), &DynamicsOptions::default()).unwrap())
    });
    c.bench_function("solve_ese_mamd/20/1e4", |b| {
        let opts = MamdOptions {
            steps: 10_000,
            ..Default::default()
        };
        b.iter(|| solve_ese_mamd(&g, black_box(0.5), &opts).unwrap())
    });
}

fn stability(c: &mut Criterion) {
    let g = instance(20);
    let x = solve_ese_foc(&g, 0.5, &EseOptions::default()).unwrap().x_star;
    let rule = AllocationRule::proportional(0.5).unwrap();
    c.bench_function("deviation_gain/20", |b| {
        b.iter(|| deviation_gain(&g, black_box(&x), &rule, 0, &SearchOptions::default()).unwrap())
    });
    c.bench_function("check_fse/20", |b| {
        b.iter(|| check_fse(&g, black_box(&x), &rule, 1e-4, &SearchOptions::default()).unwrap())
    });

    let mut slow = c.benchmark_group("scans");
    slow.sample_size(10);
    slow.bench_function("min_stable_rho/20/100", |b| {
        b.iter(|| min_stable_rho(&g, 100, 1e-4, &ScanOptions::default()).unwrap())
    });
    slow.bench_function("optimize_rho/20/0.01", |b| {
        b.iter(|| optimize_rho(&g, &OptimizerConfig::default()).unwrap())
    });
    slow.finish();
}

criterion_group!(benches, ese, stability);
criterion_main!(benches);

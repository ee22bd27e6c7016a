use aipoc_core::analysis::{stability_scan, stability_scan_sequential, ScanConfig};
use aipoc_core::simengine::Prepared;
use aipoc_core::{ScenarioConfig, Variant};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn prepared(variant: Variant) -> Prepared {
    let cfg = ScenarioConfig {
        variant,
        rho: 0.2,
        inject_noise: false,
        ..Default::default()
    };
    Prepared::new(&cfg).unwrap()
}

fn scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("stability_scan");
    group.sample_size(10);
    for samples in [64, 256] {
        let cfg = ScanConfig {
            samples,
            grid: [16, 16],
            ..Default::default()
        };
        for variant in [Variant::Ipoc, Variant::Aipoc] {
            let prep = prepared(variant);
            group.bench_with_input(
                BenchmarkId::new(format!("parallel/{variant}"), samples),
                &cfg,
                |b, cfg| b.iter(|| stability_scan(&prep, cfg).unwrap()),
            );
            group.bench_with_input(
                BenchmarkId::new(format!("sequential/{variant}"), samples),
                &cfg,
                |b, cfg| b.iter(|| stability_scan_sequential(&prep, cfg).unwrap()),
            );
        }
    }
    group.finish();
}

fn single_run(c: &mut Criterion) {
    let prep = prepared(Variant::Aipoc);
    c.bench_function("closed_loop_run/aipoc_15s", |b| b.iter(|| prep.run().unwrap()));
}

criterion_group!(benches, scan, single_run);
criterion_main!(benches);

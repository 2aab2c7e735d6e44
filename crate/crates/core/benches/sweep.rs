use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use concert_core::config::{PolicyName, RunConfig};
use concert_core::des::network::{simulate_network, NetworkSimConfig};
use concert_core::runner::{linspace, map_points, sweep, Execution, SweepSpec};

fn base() -> RunConfig {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/placement.toml");
    let mut cfg = RunConfig::load(&p).expect("shipped config");
    cfg.duration_s = 2.0;
    cfg
}

fn bench_sweep(c: &mut Criterion) {
    let cfg = base();
    let spec = SweepSpec {
        parameter: "topology.links[0].prop_delay_s".into(),
        values: linspace(0.0, 2e-3, 9),
        policies: vec![PolicyName::AlwaysLocal, PolicyName::AlwaysCentral],
    };
    let mut g = c.benchmark_group("fronthaul_sweep_18_runs");
    g.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        g.bench_function(name, |b| b.iter(|| sweep(black_box(&cfg), &spec, exec).unwrap().len()));
    }
    g.finish();
}

fn bench_replications(c: &mut Criterion) {
    let seeds: Vec<u64> = (1..=16).collect();
    let mut g = c.benchmark_group("mm1_replications");
    g.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        g.bench_with_input(BenchmarkId::new(name, seeds.len()), &seeds, |b, seeds| {
            b.iter(|| {
                map_points(seeds, exec, |&s| simulate_network(&NetworkSimConfig::single(0.8, 1.0, 1, 50_000, s)).mean_sojourn_s)
                    .into_iter()
                    .sum::<f64>()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, bench_sweep, bench_replications);
criterion_main!(benches);

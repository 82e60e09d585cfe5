use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use macfb::codec::GaussianMacConfig;
use macfb::dm::search::maximize_inner_with;
use macfb::dm::{builtin_channel, BuiltinKind, Cards};
use macfb::montecarlo::{run_trials, SimConfig};
use macfb::regions::region_sweep_with;
use macfb::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn monte_carlo(c: &mut Criterion) {
    let base = GaussianMacConfig::new(75.0 / 16.0, 75.0 / 16.0, 4.0, 1.0, 20, 0.5, 0.5).unwrap();
    let gains = base.gains().unwrap();
    let mut g = c.benchmark_group("run_trials_20k");
    g.sample_size(10);
    for (name, exec) in MODES {
        let sim = SimConfig { exec, ..SimConfig::new(base, 20_000, 1) };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(run_trials(&sim, &gains).unwrap()))
        });
    }
    g.finish();
}

fn dm_search(c: &mut Criterion) {
    let ch = builtin_channel(BuiltinKind::Erasure, 0.5).unwrap();
    let cards = Cards::new(1, 2, 2).unwrap();
    let mut g = c.benchmark_group("maximize_inner_32");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(maximize_inner_with(exec, &ch, cards, 32, 1).unwrap()))
        });
    }
    g.finish();
}

fn region(c: &mut Criterion) {
    let mut g = c.benchmark_group("region_sweep_10001");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(region_sweep_with(exec, 10.0, 10.0, 1.0, 10_001).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, monte_carlo, dm_search, region);
criterion_main!(benches);

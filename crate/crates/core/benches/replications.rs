use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mlab::landscape::{builtin_paper_f, find_critical_points};
use mlab::noise::NoiseModel;
use mlab::par::{map_indexed, Execution};
use mlab::rng::{stream, Purpose};
use mlab::sgd::{run_until_exit, SgdConfig};
use std::hint::black_box;

/// First exits from field 2 with a large learning rate, capped so each
/// replication costs about the same.
fn exits(c: &mut Criterion) {
    let land = builtin_paper_f();
    let pts = find_critical_points(&land, 20_000, 1e-10).unwrap();
    let noise = NoiseModel::pareto(1.2, 0.1);
    let cfg = SgdConfig::new(0.02, Some(0.5)).with_max_steps(20_000);
    let mut group = c.benchmark_group("exit_replications");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::new(name, 64), &exec, |bch, &exec| {
            bch.iter(|| {
                let steps: u64 = map_indexed(exec, 64, |rep| {
                    let mut rng = stream(0, Purpose::Noise, rep);
                    run_until_exit(&land, &pts, &noise, &cfg, -0.7, 1, &mut rng).unwrap().exit_step
                })
                .into_iter()
                .sum();
                black_box(steps)
            })
        });
    }
    group.finish();
}

criterion_group!(benches, exits);
criterion_main!(benches);

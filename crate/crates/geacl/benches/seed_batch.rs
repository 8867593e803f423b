//! Throughput of a seed batch: the rayon-parallel path against the
//! sequential fallback. Runs are independent simulations, so the parallel
//! path should scale with cores while producing identical reports.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use geacl::config::RunConfig;
use geacl::runner::{execute_batch, execute_batch_sequential};

fn batch_jobs(n_agents: u64, seeds: u64) -> Vec<(RunConfig, u64)> {
    let mut config = RunConfig::default();
    config.n_agents = n_agents;
    config.max_ticks = 3000;
    (0..seeds).map(|s| (config.clone(), s)).collect()
}

fn bench_seed_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("seed_batch_n64_x16");
    group.sample_size(10);
    let jobs = batch_jobs(64, 16);

    group.bench_function("sequential", |b| {
        b.iter_batched(
            || jobs.clone(),
            |jobs| {
                let outs = execute_batch_sequential(&jobs, false);
                assert!(outs.iter().all(Result::is_ok));
                outs.len()
            },
            BatchSize::LargeInput,
        )
    });

    group.bench_function("parallel", |b| {
        b.iter_batched(
            || jobs.clone(),
            |jobs| {
                let outs = execute_batch(&jobs, false, 0);
                assert!(outs.iter().all(Result::is_ok));
                outs.len()
            },
            BatchSize::LargeInput,
        )
    });

    group.finish();
}

criterion_group!(benches, bench_seed_batch);
criterion_main!(benches);

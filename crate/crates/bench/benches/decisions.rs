use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use geocache_bench::desk;
use geocache_core::assignment::{clear_market, optimal_offline, ClearingOptions, SolveOptions};
use geocache_core::online::{OnlineConfig, OnlineEngine};
use geocache_core::partition::{enumerate_partitions, CachePartition};
use std::hint::black_box;

fn partitions(c: &mut Criterion) {
    c.bench_function("enumerate C=60 K=6", |b| b.iter(|| enumerate_partitions(black_box(60), 6, 1000).count()));
}

fn clearing(c: &mut Criterion) {
    let (_, _, v) = desk(60);
    let p = CachePartition::new(vec![5, 3, 2, 2, 1, 5]);
    c.bench_function("clear_market one partition", |b| {
        b.iter(|| clear_market(&v, black_box(&p), &ClearingOptions::default()).unwrap())
    });
    let mut g = c.benchmark_group("optimal_offline");
    g.sample_size(10);
    g.bench_function("M=1000 K=6 C=60", |b| {
        b.iter(|| optimal_offline(&v, black_box(60), &SolveOptions::default()).unwrap())
    });
    g.finish();
}

fn online(c: &mut Criterion) {
    let (s, world, _) = desk(100);
    let mut engine = OnlineEngine::new(&world.placement, s.system.n_nodes, &OnlineConfig::new(100)).unwrap();
    let samples = |item: usize| -> Vec<(usize, f64)> {
        world
            .placement
            .data_locs(item)
            .iter()
            .map(|l| (l.node, world.model.base(l.node)))
            .collect()
    };
    let warm = 5000;
    for (&t, &m) in world.trace.times_ms.iter().zip(&world.trace.items).take(warm) {
        engine.record_request(m, t, &samples(m)).unwrap();
        engine.on_request(m).unwrap();
    }
    let mut i = warm;
    c.bench_function("online on_request", |b| {
        b.iter_batched(
            || {
                let m = world.trace.items[i % world.trace.len()];
                let t = world.trace.times_ms[i % world.trace.len()];
                i += 1;
                (m, t)
            },
            |(m, t)| {
                engine.record_request(m, t, &samples(m)).unwrap();
                engine.on_request(m).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, partitions, clearing, online);
criterion_main!(benches);

use geocache_core::experiment::{read_log, run_experiment, Scenario};
use geocache_core::model::{CacheState, LatencyProfile, ServerLoc, SystemConfig};
use geocache_core::sim::{
    generate_placement, generate_trace, serve_request, FailureScenario, LatencyModel, Popularity, WorkloadSpec,
};
use geocache_core::PolicyKind;
use proptest::prelude::*;

fn system(n_items: usize) -> SystemConfig {
    SystemConfig {
        n_items,
        capacity: 12,
        ..SystemConfig::default()
    }
}

fn small_scenario() -> Scenario {
    let mut s = Scenario::default();
    s.system.n_items = 50;
    s.system.capacity = 30;
    s.workload.n_requests = 1500;
    s.workload.duration_ms = 120_000.0;
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn samples_stay_in_truncation_window(seed in any::<u64>(), request in 0u64..1000) {
        let profile = LatencyProfile::victoria();
        let model = LatencyModel::new(&profile, 0.1, 3.0, 1.0, seed).unwrap();
        let s = model.sample_servers(request, 3);
        prop_assert_eq!(s.len(), profile.n_nodes() * 3);
        for (flat, &x) in s.iter().enumerate() {
            let mean = profile.latencies()[flat / 3];
            prop_assert!(x >= 1.0);
            prop_assert!((x - mean).abs() <= 0.3 * mean + 1e-9);
        }
        prop_assert_eq!(model.sample_servers(request, 3), s);
    }

    #[test]
    fn latency_is_slowest_uncached_chunk(seed in any::<u64>(), item in 0usize..30, mask in 0u32..64) {
        let placement = generate_placement(&system(30), seed).unwrap();
        let model = LatencyModel::new(&LatencyProfile::toronto(), 0.1, 3.0, 1.0, seed).unwrap();
        let samples = model.sample_servers(7, 3);
        let k = placement.k_data();
        let chunks: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let mut cache = CacheState::new(30, k, k);
        cache.set_chunks(item, chunks.clone()).unwrap();
        let out = serve_request(&placement, 3, &samples, &cache, &FailureScenario::default(), item).unwrap();
        let want = placement
            .data_locs(item)
            .iter()
            .enumerate()
            .filter(|(i, _)| !chunks.contains(i))
            .map(|(_, l)| samples[l.flat(3)])
            .fold(0.0, f64::max);
        prop_assert_eq!(out.latency_ms, want);
        prop_assert_eq!(out.hit_chunks, chunks.len());
        prop_assert!(!out.degraded);
    }

    #[test]
    fn caching_more_never_slows_a_read(seed in any::<u64>(), item in 0usize..30, mask in 0u32..64, extra in 0usize..6) {
        let placement = generate_placement(&system(30), seed).unwrap();
        let model = LatencyModel::new(&LatencyProfile::san_francisco(), 0.1, 3.0, 1.0, seed).unwrap();
        let samples = model.sample_servers(0, 3);
        let k = placement.k_data();
        let chunks: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let mut more = chunks.clone();
        if !more.contains(&extra) {
            more.push(extra);
        }
        let mut a = CacheState::new(30, k, k);
        let mut b = CacheState::new(30, k, k);
        a.set_chunks(item, chunks).unwrap();
        b.set_chunks(item, more).unwrap();
        let f = FailureScenario::default();
        let la = serve_request(&placement, 3, &samples, &a, &f, item).unwrap().latency_ms;
        let lb = serve_request(&placement, 3, &samples, &b, &f, item).unwrap().latency_ms;
        prop_assert!(lb <= la);
    }

    #[test]
    fn trace_is_well_formed(seed in any::<u64>(), n in 0usize..400, items in 1usize..50, s in 0.0f64..3.0) {
        let spec = WorkloadSpec {
            n_requests: n,
            popularity: Popularity::Zipf { tail_index: s },
            duration_ms: 10_000.0,
            seed,
        };
        let t = generate_trace(&spec, items).unwrap();
        prop_assert_eq!(t.len(), n);
        prop_assert!(t.times_ms.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(t.items.iter().all(|&m| m < items));
        prop_assert_eq!(generate_trace(&spec, items).unwrap(), t);
    }
}

#[test]
fn failed_chunk_is_read_from_fastest_parity() {
    let placement = generate_placement(&system(40), 11).unwrap();
    let model = LatencyModel::new(&LatencyProfile::victoria(), 0.1, 3.0, 1.0, 5).unwrap();
    let samples = model.sample_servers(3, 3);
    let cache = CacheState::new(40, placement.k_data(), 0);
    let failed = placement.data_locs(0)[2];
    let failure = FailureScenario {
        failed_server: Some(failed),
        decode_latency_ms: 18.82,
    };
    let out = serve_request(&placement, 3, &samples, &cache, &failure, 0).unwrap();
    assert!(out.degraded);
    assert_eq!(out.recovered, vec![2]);
    let parity: Vec<&ServerLoc> = placement.parity_locs(0).iter().filter(|l| **l != failed).collect();
    let fastest = parity.iter().map(|l| samples[l.flat(3)]).fold(f64::INFINITY, f64::min);
    let used = out.fetched.iter().find(|f| f.parity).unwrap();
    assert_eq!(used.latency_ms, fastest);
    let slowest = out.fetched.iter().map(|f| f.latency_ms).fold(0.0, f64::max);
    assert_eq!(out.latency_ms, slowest + 18.82);
}

#[test]
fn zipf_head_dominates() {
    let spec = WorkloadSpec {
        n_requests: 20_000,
        popularity: Popularity::Zipf { tail_index: 1.2 },
        duration_ms: 1.0,
        seed: 4,
    };
    let mut counts = generate_trace(&spec, 100).unwrap().counts(100);
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let harmonic: f64 = (1..=100).map(|i| f64::from(i).powf(-1.2)).sum();
    let share = counts[0] as f64 / 20_000.0;
    assert!((share - 1.0 / harmonic).abs() < 0.015, "{share}");
    assert!(counts[0] > counts[1] && counts[1] > counts[4]);
}

#[test]
fn no_capacity_means_every_policy_pays_backend_latency() {
    let mut s = small_scenario();
    s.system.capacity = 0;
    let r = run_experiment(&s, &PolicyKind::ALL, false).unwrap().report();
    let base = r.get(PolicyKind::Backend).unwrap().avg_latency_ms;
    for p in &r.policies {
        assert_eq!(p.avg_latency_ms, base, "{}", p.policy);
        assert_eq!(p.hit_ratio, 0.0);
    }
}

#[test]
fn caching_policies_beat_backend() {
    let r = run_experiment(&small_scenario(), &PolicyKind::ALL, false).unwrap().report();
    let base = r.get(PolicyKind::Backend).unwrap().avg_latency_ms;
    for p in r.policies.iter().filter(|p| p.policy != PolicyKind::Backend) {
        assert!(p.avg_latency_ms < base, "{} {}", p.policy, p.avg_latency_ms);
        assert!(p.hit_ratio > 0.0);
    }
}

#[test]
fn log_replays_to_the_same_report() {
    let e = run_experiment(&small_scenario(), &PolicyKind::ALL, false).unwrap();
    let logs = read_log(&e.to_csv(false)).unwrap();
    assert_eq!(logs.len(), PolicyKind::ALL.len());
    let report = e.report();
    for (policy, records) in logs {
        let got = geocache_core::experiment::summarize(policy, 6, &records);
        let want = report.get(policy).unwrap();
        assert_eq!(got.avg_latency_ms, want.avg_latency_ms);
        assert_eq!(got.hit_ratio, want.hit_ratio);
        assert_eq!(got.p95_latency_ms, want.p95_latency_ms);
    }
}

#[test]
fn different_seeds_give_different_traces() {
    let a = small_scenario();
    let mut b = small_scenario();
    b.seed = 2;
    assert_ne!(a.build().unwrap().trace, b.build().unwrap().trace);
}

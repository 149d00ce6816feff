//! Desk-scale sweeps on the default scenario.

use geocache_core::experiment::{sweep, PopularityKind, Scenario, SweepParam};
use geocache_core::{run_experiment, PolicyKind};

fn values(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn latency_is_nonincreasing_in_capacity() {
    let rows = sweep(
        &Scenario::default(),
        SweepParam::Capacity,
        &values(&["60", "80", "100", "120"]),
        &PolicyKind::ALL,
        true,
    )
    .unwrap();
    for policy in PolicyKind::ALL {
        let lat: Vec<f64> = rows.iter().map(|r| r.report.get(policy).unwrap().avg_latency_ms).collect();
        assert!(lat.windows(2).all(|w| w[1] <= w[0]), "{policy}: {lat:?}");
    }
}

#[test]
fn uniform_popularity_levels_the_field() {
    let mut s = Scenario::default();
    s.workload.popularity = PopularityKind::Uniform;
    let r = run_experiment(&s, &PolicyKind::ALL, true).unwrap().report();
    let lat: Vec<f64> = r.policies.iter().map(|p| p.avg_latency_ms).collect();
    let (lo, hi) = lat.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    assert!(hi / lo < 1.1, "{lat:?}");
}

#[test]
fn online_decision_time_stays_small_as_k_grows() {
    let rows = sweep(
        &Scenario::default(),
        SweepParam::K,
        &values(&["2", "4", "6", "8"]),
        &[PolicyKind::Online],
        false,
    )
    .unwrap();
    let work: Vec<usize> = rows
        .iter()
        .map(|r| r.report.get(PolicyKind::Online).unwrap().max_partitions_examined)
        .collect();
    assert!(work.windows(2).all(|w| w[0] <= w[1]), "{work:?}");
    for r in &rows {
        let ms = r.report.get(PolicyKind::Online).unwrap().avg_decision_ms;
        assert!(ms < 10.0, "K={} {ms}", r.value);
    }
}

use geocache_core::assignment::{
    clear_market, clear_market_with_state, optimal_offline, ClearingOptions, SolveOptions,
};
use geocache_core::model::ValuationArray;
use geocache_core::partition::{enumerate_partitions, CachePartition};
use proptest::prelude::*;

/// Valuation rows with integer latencies and rates so every objective is an exact sum.
fn integer_valuation(latencies: &[Vec<u32>], rates: &[u32]) -> ValuationArray {
    let rows: Vec<Vec<f64>> = latencies
        .iter()
        .zip(rates)
        .map(|(l, r)| {
            let mut l: Vec<f64> = l.iter().map(|&v| f64::from(v)).collect();
            l.sort_by(|a, b| b.total_cmp(a));
            let k = l.len();
            (0..=k)
                .map(|e| {
                    let f = if e == k { 0.0 } else { l[e] };
                    (l[0] - f) * f64::from(*r)
                })
                .collect()
        })
        .collect();
    ValuationArray::from_tau_rows(&rows).unwrap()
}

/// Best objective with exactly `x_k` items at each level, by exhaustive search.
fn partition_brute_force(v: &ValuationArray, p: &CachePartition) -> f64 {
    fn go(v: &ValuationArray, m: usize, left: &mut Vec<usize>, acc: f64, best: &mut f64) {
        if m == v.n_items() {
            if left.iter().all(|&x| x == 0) {
                *best = best.max(acc);
            }
            return;
        }
        go(v, m + 1, left, acc, best);
        for k in 1..=v.k() {
            if left[k - 1] > 0 {
                left[k - 1] -= 1;
                go(v, m + 1, left, acc + v.tau(m, k), best);
                left[k - 1] += 1;
            }
        }
    }
    let mut best = f64::NEG_INFINITY;
    go(v, 0, &mut p.counts().to_vec(), 0.0, &mut best);
    best
}

/// Multiple-choice knapsack: each item picks one level `e` of weight `e`, total weight `c`.
fn knapsack(v: &ValuationArray, c: usize) -> Option<f64> {
    let mut dp = vec![None::<f64>; c + 1];
    dp[0] = Some(0.0);
    for m in 0..v.n_items() {
        let mut next = vec![None::<f64>; c + 1];
        for w in 0..=c {
            let Some(base) = dp[w] else { continue };
            for e in 0..=v.k() {
                if w + e > c {
                    break;
                }
                let cand = base + v.tau(m, e);
                next[w + e] = Some(next[w + e].map_or(cand, |b: f64| b.max(cand)));
            }
        }
        dp = next;
    }
    dp[c]
}

fn instance() -> impl Strategy<Value = (Vec<Vec<u32>>, Vec<u32>)> {
    (1usize..=4, 1usize..=6).prop_flat_map(|(k, m)| {
        (
            prop::collection::vec(prop::collection::vec(1u32..50, k), m),
            prop::collection::vec(0u32..6, m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn clearing_is_optimal_per_partition((lat, rates) in instance(), c in 0usize..10) {
        let v = integer_valuation(&lat, &rates);
        for p in enumerate_partitions(c, v.k(), v.n_items()) {
            let (a, state) = clear_market_with_state(&v, &p, &ClearingOptions::default()).unwrap();
            prop_assert_eq!(a.objective, partition_brute_force(&v, &p));
            prop_assert!(state.constricted.is_empty());
            for k in 1..=v.k() {
                prop_assert_eq!(a.epsilon.iter().filter(|&&e| e == k).count(), p.count(k));
            }
        }
    }

    #[test]
    fn offline_matches_knapsack((lat, rates) in instance(), c in 0usize..14) {
        let v = integer_valuation(&lat, &rates);
        let s = optimal_offline(&v, c, &SolveOptions::default()).unwrap();
        match knapsack(&v, c) {
            Some(best) => {
                prop_assert_eq!(s.assignment.objective, best);
                prop_assert_eq!(s.assignment.chunks(), c);
            }
            None => {
                prop_assert_eq!(s.assignment.objective, 0.0);
                prop_assert!(s.partition.is_none());
            }
        }
    }

    #[test]
    fn offline_has_no_improving_exchange((lat, rates) in instance(), c in 0usize..14) {
        let v = integer_valuation(&lat, &rates);
        let eps = optimal_offline(&v, c, &SolveOptions::default()).unwrap().assignment.epsilon;
        for i in 0..eps.len() {
            for j in 0..eps.len() {
                if i == j || eps[i] == 0 || eps[j] == v.k() {
                    continue;
                }
                // Move one chunk from item i to item j.
                let before = v.tau(i, eps[i]) + v.tau(j, eps[j]);
                let after = v.tau(i, eps[i] - 1) + v.tau(j, eps[j] + 1);
                prop_assert!(after <= before);
            }
        }
    }

    #[test]
    fn real_valued_clearing_is_near_optimal(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..1000.0, 3), 1..6),
        c in 0usize..8,
    ) {
        // Monotone rows with tau_0 = 0.
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|mut r| {
                r.sort_by(f64::total_cmp);
                std::iter::once(0.0).chain(r).collect()
            })
            .collect();
        let v = ValuationArray::from_tau_rows(&rows).unwrap();
        for p in enumerate_partitions(c, v.k(), v.n_items()) {
            let a = clear_market(&v, &p, &ClearingOptions::default()).unwrap();
            let best = partition_brute_force(&v, &p);
            prop_assert!((a.objective - best).abs() <= 1e-9 * best.abs().max(1.0));
        }
    }
}

#[test]
fn marginal_bid_agrees_when_it_terminates() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut agreed = 0;
    for _ in 0..200 {
        let m = rng.random_range(2..6);
        let lat: Vec<Vec<u32>> = (0..m).map(|_| (0..3).map(|_| rng.random_range(1..50)).collect()).collect();
        let rates: Vec<u32> = (0..m).map(|_| rng.random_range(1..6)).collect();
        let v = integer_valuation(&lat, &rates);
        for p in enumerate_partitions(4, 3, m) {
            if let Ok(a) = clear_market(&v, &p, &ClearingOptions::marginal_bid(1.0)) {
                assert!(a.objective <= partition_brute_force(&v, &p));
                agreed += 1;
            }
        }
    }
    assert!(agreed > 0);
}

//! Per-request caching decisions driven by live popularity and latency estimates.
//!
//! Each request first feeds the estimators ([`OnlineEngine::record_request`]) and then
//! lets the engine revise the cache ([`OnlineEngine::on_request`]). A request for an item
//! that is not fully cached either admits it outright when `K` chunks are free, or
//! reopens a small sub-problem: the requested item plus the cached items with the lowest
//! valuation per cached chunk, taken until the space they hold together with the free
//! space reaches `K`. That sub-problem is solved exactly with [`optimal_offline`].

use std::collections::{BTreeMap, BTreeSet};

use crate::assignment::{optimal_offline, SolveOptions};
use crate::error::{Error, Result};
use crate::model::{CacheState, ChunkLatency, PlacementMap, ValuationArray};

/// Decayed per-item request counters.
#[derive(Debug, Clone, PartialEq)]
pub struct DreCounter {
    counts: Vec<f64>,
    decay_ratio: f64,
    period_ms: f64,
    last_tick_ms: f64,
}

impl DreCounter {
    pub fn new(n_items: usize, decay_ratio: f64, period_ms: f64) -> Result<Self> {
        if !(decay_ratio > 0.0 && decay_ratio <= 1.0) {
            return Err(Error::config("online.decay_ratio", "must lie in (0, 1]"));
        }
        if !(period_ms.is_finite() && period_ms > 0.0) {
            return Err(Error::config("online.decay_period_ms", "must be positive"));
        }
        Ok(DreCounter {
            counts: vec![0.0; n_items],
            decay_ratio,
            period_ms,
            last_tick_ms: 0.0,
        })
    }

    pub fn count(&self, item: usize) -> f64 {
        self.counts[item]
    }

    pub fn record(&mut self, item: usize) {
        self.counts[item] += 1.0;
    }

    /// Applies one decay step to every counter.
    pub fn decay(&mut self) {
        let r = self.decay_ratio;
        self.counts.iter_mut().for_each(|c| *c *= r);
    }

    /// Applies every decay step due up to `now_ms`.
    pub fn advance_to(&mut self, now_ms: f64) {
        if now_ms < self.last_tick_ms + self.period_ms {
            return;
        }
        let ticks = ((now_ms - self.last_tick_ms) / self.period_ms).floor();
        self.last_tick_ms += ticks * self.period_ms;
        if self.decay_ratio < 1.0 {
            let f = self.decay_ratio.powf(ticks);
            self.counts.iter_mut().for_each(|c| *c *= f);
        }
    }

    /// Requests per second. A counter fed at a steady `r` per period settles at
    /// `r / (1 - decay_ratio)`; without decay the count is spread over the time seen.
    pub fn rate_per_sec(&self, item: usize, now_ms: f64) -> f64 {
        let c = self.counts[item];
        if self.decay_ratio < 1.0 {
            c * (1.0 - self.decay_ratio) / (self.period_ms / 1000.0)
        } else {
            c / (now_ms.max(self.period_ms) / 1000.0)
        }
    }
}

/// Per-node latency estimates, `l <- alpha * l + (1 - alpha) * sample`.
#[derive(Debug, Clone, PartialEq)]
pub struct EwmaLatency {
    estimate: Vec<Option<f64>>,
    alpha: f64,
}

impl EwmaLatency {
    pub fn new(n_nodes: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::config("online.alpha", "must lie in (0, 1]"));
        }
        Ok(EwmaLatency {
            estimate: vec![None; n_nodes],
            alpha,
        })
    }

    /// Starts every node from a known value instead of its first sample.
    pub fn with_initial(initial: &[f64], alpha: f64) -> Result<Self> {
        let mut e = EwmaLatency::new(initial.len(), alpha)?;
        e.estimate = initial.iter().map(|&v| Some(v)).collect();
        Ok(e)
    }

    pub fn update(&mut self, node: usize, sample: f64) {
        if node >= self.estimate.len() {
            self.estimate.resize(node + 1, None);
        }
        let slot = &mut self.estimate[node];
        *slot = Some(match *slot {
            None => sample,
            Some(l) => self.alpha * l + (1.0 - self.alpha) * sample,
        });
    }

    pub fn estimate(&self, node: usize) -> Option<f64> {
        self.estimate.get(node).copied().flatten()
    }

    /// The node's estimate, or the mean of the known estimates (0 when none is known).
    pub fn value(&self, node: usize) -> f64 {
        self.estimate(node).unwrap_or_else(|| {
            let known: Vec<f64> = self.estimate.iter().flatten().copied().collect();
            if known.is_empty() {
                0.0
            } else {
                known.iter().sum::<f64>() / known.len() as f64
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineConfig {
    pub capacity: usize,
    pub decay_ratio: f64,
    pub decay_period_ms: f64,
    pub alpha: f64,
    pub solve: SolveOptions,
}

impl OnlineConfig {
    pub fn new(capacity: usize) -> Self {
        OnlineConfig {
            capacity,
            decay_ratio: 0.5,
            decay_period_ms: 10_000.0,
            alpha: 0.8,
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `K` chunks were free and the item was cached whole.
    Admit,
    /// A sub-problem over the item and low-value cached items was solved.
    Reoptimize,
    /// The item was already fully cached.
    Resident,
}

/// Data chunks known to be unavailable, each served instead by a parity chunk on
/// another node plus a decode cost.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Unavailable {
    chunks: BTreeMap<(usize, usize), (usize, f64)>,
}

impl Unavailable {
    pub fn insert(&mut self, item: usize, chunk: usize, parity_node: usize, decode_ms: f64) {
        self.chunks.insert((item, chunk), (parity_node, decode_ms));
    }

    pub fn get(&self, item: usize, chunk: usize) -> Option<(usize, f64)> {
        self.chunks.get(&(item, chunk)).copied()
    }

    /// Estimated latency of data chunk `chunk` of `item` stored on `node`.
    pub fn latency(&self, ewma: &EwmaLatency, item: usize, chunk: usize, node: usize) -> f64 {
        match self.get(item, chunk) {
            Some((parity_node, decode)) => ewma.value(parity_node) + decode,
            None => ewma.value(node),
        }
    }
}

/// What [`OnlineEngine::on_request`] did.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub item: usize,
    pub branch: Branch,
    pub eps_before: usize,
    pub eps_after: usize,
    /// Items whose cached chunks were all dropped.
    pub evicted: Vec<usize>,
    /// The sub-problem items, requested item first.
    pub candidates: Vec<usize>,
    /// Chunks the sub-problem distributed.
    pub sub_capacity: usize,
    pub sub_objective: Option<f64>,
    pub partitions_examined: usize,
}

/// The online caching engine for one frontend.
#[derive(Debug, Clone)]
pub struct OnlineEngine {
    k: usize,
    /// Node of each data chunk, `item * K + index`.
    chunk_node: Vec<usize>,
    cache: CacheState,
    valuation: ValuationArray,
    dre: DreCounter,
    ewma: EwmaLatency,
    unavailable: Unavailable,
    solve: SolveOptions,
    now_ms: f64,
}

impl OnlineEngine {
    pub fn new(placement: &PlacementMap, n_nodes: usize, config: &OnlineConfig) -> Result<Self> {
        let ewma = EwmaLatency::new(n_nodes, config.alpha)?;
        OnlineEngine::with_estimators(placement, config, ewma)
    }

    /// Like [`new`](Self::new) with a prepared latency estimator.
    pub fn with_estimators(placement: &PlacementMap, config: &OnlineConfig, ewma: EwmaLatency) -> Result<Self> {
        let (n, k) = (placement.n_items(), placement.k_data());
        let chunk_node = (0..n)
            .flat_map(|m| placement.data_locs(m).iter().map(|l| l.node))
            .collect();
        Ok(OnlineEngine {
            k,
            chunk_node,
            cache: CacheState::new(n, k, config.capacity),
            valuation: ValuationArray::zeros(n, k),
            dre: DreCounter::new(n, config.decay_ratio, config.decay_period_ms)?,
            ewma,
            unavailable: Unavailable::default(),
            solve: config.solve,
            now_ms: 0.0,
        })
    }

    pub fn cache(&self) -> &CacheState {
        &self.cache
    }

    pub fn cache_mut(&mut self) -> &mut CacheState {
        &mut self.cache
    }

    pub fn valuation(&self) -> &ValuationArray {
        &self.valuation
    }

    pub fn dre(&self) -> &DreCounter {
        &self.dre
    }

    pub fn ewma(&self) -> &EwmaLatency {
        &self.ewma
    }

    /// `sum_m tau[m][eps_m]` on the engine's current valuation.
    pub fn objective(&self) -> f64 {
        self.valuation.objective(&self.cache.epsilons())
    }

    fn check_item(&self, item: usize) -> Result<()> {
        if item >= self.cache.n_items() {
            return Err(Error::domain(format!("unknown item {item}")));
        }
        Ok(())
    }

    /// Counts a read of `item` at `now_ms` and folds in the latencies it observed.
    pub fn record_request(&mut self, item: usize, now_ms: f64, samples: &[(usize, f64)]) -> Result<()> {
        self.check_item(item)?;
        self.now_ms = now_ms;
        self.dre.advance_to(now_ms);
        self.dre.record(item);
        for &(node, latency) in samples {
            self.ewma.update(node, latency);
        }
        Ok(())
    }

    /// Marks data chunk `chunk` of `item` as rebuilt from a parity chunk on
    /// `parity_node`; its estimated latency then includes `decode_ms`.
    pub fn note_recovered(&mut self, item: usize, chunk: usize, parity_node: usize, decode_ms: f64) {
        self.unavailable.insert(item, chunk, parity_node, decode_ms);
    }

    /// Recomputes the valuation row of `item` from the current estimates.
    pub fn refresh(&mut self, item: usize) -> Result<()> {
        let k = self.k;
        let chunks = (0..k)
            .map(|i| {
                let node = self.chunk_node[item * k + i];
                ChunkLatency {
                    index: i,
                    node,
                    latency: self.unavailable.latency(&self.ewma, item, i, node),
                }
            })
            .collect();
        let rate = self.dre.rate_per_sec(item, self.now_ms);
        self.valuation.set_item(item, chunks, rate)
    }

    /// Revises the cache after a request for `item`.
    pub fn on_request(&mut self, item: usize) -> Result<Decision> {
        self.check_item(item)?;
        let k = self.k;
        let cap = self.cache.capacity();
        self.refresh(item)?;
        let eps_before = self.cache.epsilon(item);
        let mut decision = Decision {
            item,
            branch: Branch::Resident,
            eps_before,
            eps_after: eps_before,
            evicted: Vec::new(),
            candidates: Vec::new(),
            sub_capacity: 0,
            sub_objective: None,
            partitions_examined: 0,
        };
        if eps_before == k {
            return Ok(decision);
        }
        if cap >= k && self.cache.used() <= cap - k {
            self.cache.set_level(item, k, &self.valuation)?;
            decision.branch = Branch::Admit;
            decision.eps_after = k;
            return Ok(decision);
        }

        decision.branch = Branch::Reoptimize;
        let mut candidates = vec![item];
        let mut chosen: BTreeSet<usize> = BTreeSet::from([item]);
        let mut avail = self.cache.free() + eps_before;
        while avail < k {
            let next = self
                .cache
                .cached_items()
                .filter(|n| !chosen.contains(n))
                .map(|n| {
                    let e = self.cache.epsilon(n);
                    (self.valuation.tau(n, e) / e as f64, n)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let Some((_, n)) = next else { break };
            self.refresh(n)?;
            chosen.insert(n);
            candidates.push(n);
            avail += self.cache.epsilon(n);
        }
        debug_assert!(candidates.len() <= k + 1);
        debug_assert!(avail < 2 * k);

        // tau is nondecreasing in the level, so filling every slot the candidates can
        // hold is never worse than leaving some free.
        let sub_capacity = avail.min(candidates.len() * k);
        let sub = self.valuation.subset(&candidates);
        let solution = optimal_offline(&sub, sub_capacity, &self.solve)?;
        let before: Vec<usize> = candidates.iter().map(|&n| self.cache.epsilon(n)).collect();
        for &n in &candidates {
            self.cache.evict(n);
        }
        for (i, &n) in candidates.iter().enumerate() {
            let e = solution.assignment.epsilon[i];
            if e > 0 {
                self.cache.set_level(n, e, &self.valuation)?;
            } else if before[i] > 0 {
                decision.evicted.push(n);
            }
        }
        decision.eps_after = self.cache.epsilon(item);
        decision.candidates = candidates;
        decision.sub_capacity = sub_capacity;
        decision.sub_objective = Some(solution.assignment.objective);
        decision.partitions_examined = solution.partitions_examined;
        Ok(decision)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ServerLoc;

    #[test]
    fn ewma_moves_toward_sample() {
        let mut e = EwmaLatency::new(1, 0.5).unwrap();
        e.update(0, 100.0);
        e.update(0, 200.0);
        assert_eq!(e.estimate(0), Some(150.0));
    }

    #[test]
    fn ewma_with_unit_alpha_ignores_samples() {
        let mut e = EwmaLatency::with_initial(&[100.0], 1.0).unwrap();
        e.update(0, 500.0);
        assert_eq!(e.estimate(0), Some(100.0));
    }

    #[test]
    fn ewma_cold_start_and_fallback() {
        let mut e = EwmaLatency::new(3, 0.8).unwrap();
        assert_eq!(e.value(2), 0.0);
        e.update(0, 40.0);
        e.update(1, 60.0);
        assert_eq!(e.estimate(0), Some(40.0));
        assert_eq!(e.value(2), 50.0);
    }

    #[test]
    fn dre_decays_by_ratio() {
        let mut d = DreCounter::new(1, 0.5, 10_000.0).unwrap();
        for _ in 0..8 {
            d.record(0);
        }
        d.decay();
        assert_eq!(d.count(0), 4.0);
        d.advance_to(25_000.0);
        assert_eq!(d.count(0), 1.0);
        d.advance_to(29_999.0);
        assert_eq!(d.count(0), 1.0);
        d.advance_to(30_000.0);
        assert_eq!(d.count(0), 0.5);
    }

    #[test]
    fn dre_rejects_bad_ratio() {
        assert!(matches!(
            DreCounter::new(1, 1.5, 10.0),
            Err(Error::Config { key, .. }) if key == "online.decay_ratio"
        ));
    }

    fn placement(n: usize, k: usize) -> PlacementMap {
        let data = (0..n)
            .flat_map(|_| (0..k).map(|i| ServerLoc::new(i, 0)))
            .collect();
        let parity = (0..n).map(|_| ServerLoc::new(k, 0)).collect();
        PlacementMap::new(k, 1, data, parity).unwrap()
    }

    fn samples(k: usize, lat: &[f64]) -> Vec<(usize, f64)> {
        (0..k).map(|i| (i, lat[i])).collect()
    }

    #[test]
    fn first_request_is_admitted_whole() {
        let mut e = OnlineEngine::new(&placement(3, 2), 3, &OnlineConfig::new(4)).unwrap();
        e.record_request(1, 0.0, &samples(2, &[100.0, 50.0])).unwrap();
        let d = e.on_request(1).unwrap();
        assert_eq!(d.branch, Branch::Admit);
        assert_eq!(e.cache().epsilon(1), 2);
    }

    #[test]
    fn cold_item_is_not_admitted_into_a_hot_cache() {
        let mut e = OnlineEngine::new(&placement(3, 2), 3, &OnlineConfig::new(4)).unwrap();
        let s = samples(2, &[100.0, 50.0]);
        for t in 0..10 {
            for m in [0, 1] {
                e.record_request(m, t as f64, &s).unwrap();
                e.on_request(m).unwrap();
            }
        }
        e.record_request(2, 10.0, &s).unwrap();
        let d = e.on_request(2).unwrap();
        assert_eq!(d.branch, Branch::Reoptimize);
        assert_eq!(d.eps_after, 0);
        assert!(d.evicted.is_empty());
        assert_eq!(e.cache().epsilons(), vec![2, 2, 0]);
    }

    #[test]
    fn resident_item_is_left_alone() {
        let mut e = OnlineEngine::new(&placement(2, 2), 3, &OnlineConfig::new(4)).unwrap();
        let s = samples(2, &[100.0, 50.0]);
        e.record_request(0, 0.0, &s).unwrap();
        e.on_request(0).unwrap();
        e.record_request(0, 1.0, &s).unwrap();
        assert_eq!(e.on_request(0).unwrap().branch, Branch::Resident);
    }

    #[test]
    fn small_cache_still_gets_partial_items() {
        // C < K: nothing is ever admitted whole.
        let mut e = OnlineEngine::new(&placement(2, 3), 4, &OnlineConfig::new(2)).unwrap();
        e.record_request(0, 0.0, &samples(3, &[300.0, 200.0, 100.0])).unwrap();
        let d = e.on_request(0).unwrap();
        assert_eq!(d.branch, Branch::Reoptimize);
        assert_eq!(d.eps_after, 2);
        assert_eq!(e.cache().used(), 2);
    }

    #[test]
    fn unknown_item_is_rejected() {
        let mut e = OnlineEngine::new(&placement(2, 2), 3, &OnlineConfig::new(4)).unwrap();
        assert!(matches!(e.on_request(5), Err(Error::Domain(_))));
    }
}

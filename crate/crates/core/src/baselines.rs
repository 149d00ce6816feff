//! Comparison policies: no cache, LRU, LFU and an Agar-style greedy configurator.
//!
//! LRU and LFU cache whole items (all `K` data chunks). LFU ranks items by decayed
//! request counters rather than raw counts. The Agar-style configurator periodically
//! rebuilds the whole cache from a valuation snapshot by repeatedly buying the increment
//! with the largest valuation gain per chunk.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CacheState, ChunkLatency, PlacementMap, ValuationArray};
use crate::online::{DreCounter, EwmaLatency, Unavailable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Backend,
    Lru,
    Lfu,
    Agar,
    Optimal,
    Online,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Backend,
        PolicyKind::Lru,
        PolicyKind::Lfu,
        PolicyKind::Agar,
        PolicyKind::Optimal,
        PolicyKind::Online,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Backend => "backend",
            PolicyKind::Lru => "lru",
            PolicyKind::Lfu => "lfu",
            PolicyKind::Agar => "agar",
            PolicyKind::Optimal => "optimal",
            PolicyKind::Online => "online",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config("policies", format!("unknown policy `{s}`")))
    }
}

fn insert_whole(cache: &mut CacheState, item: usize) -> Result<()> {
    cache.set_chunks(item, (0..cache.k()).collect())
}

/// Least recently used, whole items.
#[derive(Debug, Clone)]
pub struct LruPolicy {
    cache: CacheState,
    last_use: Vec<u64>,
    clock: u64,
}

impl LruPolicy {
    pub fn new(n_items: usize, k: usize, capacity: usize) -> Self {
        LruPolicy {
            cache: CacheState::new(n_items, k, capacity),
            last_use: vec![0; n_items],
            clock: 0,
        }
    }

    pub fn cache(&self) -> &CacheState {
        &self.cache
    }

    pub fn cache_mut(&mut self) -> &mut CacheState {
        &mut self.cache
    }

    /// Touches `item`, inserting it on a miss; returns the evicted items.
    pub fn on_request(&mut self, item: usize) -> Result<Vec<usize>> {
        if item >= self.cache.n_items() {
            return Err(Error::domain(format!("unknown item {item}")));
        }
        self.clock += 1;
        self.last_use[item] = self.clock;
        let k = self.cache.k();
        if self.cache.epsilon(item) == k || k > self.cache.capacity() {
            return Ok(Vec::new());
        }
        let mut evicted = Vec::new();
        self.cache.evict(item);
        while self.cache.free() < k {
            let victim = self
                .cache
                .cached_items()
                .min_by_key(|&m| (self.last_use[m], m))
                .expect("a full cache holds items");
            self.cache.evict(victim);
            evicted.push(victim);
        }
        insert_whole(&mut self.cache, item)?;
        Ok(evicted)
    }
}

/// Least frequently used on decayed counters, ties to the least recently used.
#[derive(Debug, Clone)]
pub struct LfuPolicy {
    cache: CacheState,
    counts: DreCounter,
    last_use: Vec<u64>,
    clock: u64,
}

impl LfuPolicy {
    pub fn new(n_items: usize, k: usize, capacity: usize, counts: DreCounter) -> Self {
        LfuPolicy {
            cache: CacheState::new(n_items, k, capacity),
            counts,
            last_use: vec![0; n_items],
            clock: 0,
        }
    }

    pub fn cache(&self) -> &CacheState {
        &self.cache
    }

    pub fn cache_mut(&mut self) -> &mut CacheState {
        &mut self.cache
    }

    pub fn counts(&self) -> &DreCounter {
        &self.counts
    }

    pub fn on_request(&mut self, item: usize, now_ms: f64) -> Result<Vec<usize>> {
        if item >= self.cache.n_items() {
            return Err(Error::domain(format!("unknown item {item}")));
        }
        self.counts.advance_to(now_ms);
        self.counts.record(item);
        self.clock += 1;
        self.last_use[item] = self.clock;
        let k = self.cache.k();
        if self.cache.epsilon(item) == k || k > self.cache.capacity() {
            return Ok(Vec::new());
        }
        let mut evicted = Vec::new();
        self.cache.evict(item);
        while self.cache.free() < k {
            let victim = self
                .cache
                .cached_items()
                .min_by(|&a, &b| {
                    self.counts
                        .count(a)
                        .total_cmp(&self.counts.count(b))
                        .then(self.last_use[a].cmp(&self.last_use[b]))
                        .then(a.cmp(&b))
                })
                .expect("a full cache holds items");
            self.cache.evict(victim);
            evicted.push(victim);
        }
        insert_whole(&mut self.cache, item)?;
        Ok(evicted)
    }
}

/// Greedy configuration: while chunks remain, raise the item and level pair with the
/// largest `(tau[m][j] - tau[m][e_m]) / (j - e_m)` over `j > e_m`. Ties go to the lower
/// item id, then the smaller step.
pub fn agar_configure(valuation: &ValuationArray, capacity: usize) -> Vec<usize> {
    let (n, k) = (valuation.n_items(), valuation.k());
    let mut eps = vec![0usize; n];
    let mut left = capacity;
    while left > 0 {
        let mut pick: Option<(f64, usize, usize)> = None;
        for (m, &cur) in eps.iter().enumerate() {
            let base = valuation.tau(m, cur);
            for j in cur + 1..=k.min(cur + left) {
                let gain = (valuation.tau(m, j) - base) / (j - cur) as f64;
                if pick.is_none_or(|(g, _, _)| gain > g) {
                    pick = Some((gain, m, j));
                }
            }
        }
        let Some((_, m, j)) = pick else { break };
        left -= j - eps[m];
        eps[m] = j;
    }
    eps
}

/// Agar-style policy: reconfigures from its own estimates every `interval` requests.
#[derive(Debug, Clone)]
pub struct AgarPolicy {
    k: usize,
    chunk_node: Vec<usize>,
    cache: CacheState,
    valuation: ValuationArray,
    counts: DreCounter,
    ewma: EwmaLatency,
    unavailable: Unavailable,
    interval: usize,
    seen: usize,
    now_ms: f64,
}

impl AgarPolicy {
    pub fn new(
        placement: &PlacementMap,
        capacity: usize,
        interval: usize,
        counts: DreCounter,
        ewma: EwmaLatency,
    ) -> Result<Self> {
        if interval == 0 {
            return Err(Error::config("policy.agar_interval", "must be at least 1"));
        }
        let (n, k) = (placement.n_items(), placement.k_data());
        Ok(AgarPolicy {
            k,
            chunk_node: (0..n)
                .flat_map(|m| placement.data_locs(m).iter().map(|l| l.node))
                .collect(),
            cache: CacheState::new(n, k, capacity),
            valuation: ValuationArray::zeros(n, k),
            counts,
            ewma,
            unavailable: Unavailable::default(),
            interval,
            seen: 0,
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

    /// See [`OnlineEngine::note_recovered`](crate::online::OnlineEngine::note_recovered).
    pub fn note_recovered(&mut self, item: usize, chunk: usize, parity_node: usize, decode_ms: f64) {
        self.unavailable.insert(item, chunk, parity_node, decode_ms);
    }

    /// Feeds one request; returns true when the cache was rebuilt.
    pub fn on_request(&mut self, item: usize, now_ms: f64, samples: &[(usize, f64)]) -> Result<bool> {
        if item >= self.cache.n_items() {
            return Err(Error::domain(format!("unknown item {item}")));
        }
        self.now_ms = now_ms;
        self.counts.advance_to(now_ms);
        self.counts.record(item);
        for &(node, l) in samples {
            self.ewma.update(node, l);
        }
        self.seen += 1;
        if !self.seen.is_multiple_of(self.interval) {
            return Ok(false);
        }
        self.reconfigure()?;
        Ok(true)
    }

    /// Rebuilds the valuation of every item and reinstalls the greedy configuration.
    pub fn reconfigure(&mut self) -> Result<()> {
        let k = self.k;
        for m in 0..self.cache.n_items() {
            let chunks = (0..k)
                .map(|i| {
                    let node = self.chunk_node[m * k + i];
                    ChunkLatency {
                        index: i,
                        node,
                        latency: self.unavailable.latency(&self.ewma, m, i, node),
                    }
                })
                .collect();
            let rate = self.counts.rate_per_sec(m, self.now_ms);
            self.valuation.set_item(m, chunks, rate)?;
        }
        let eps = agar_configure(&self.valuation, self.cache.capacity());
        self.cache.clear();
        for (m, &e) in eps.iter().enumerate() {
            if e > 0 {
                self.cache.set_level(m, e, &self.valuation)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn items(cache: &CacheState) -> Vec<usize> {
        cache.cached_items().collect()
    }

    #[test]
    fn lru_evicts_least_recent() {
        let mut p = LruPolicy::new(3, 2, 4);
        for m in [0, 1, 0, 2] {
            p.on_request(m).unwrap();
        }
        assert_eq!(items(p.cache()), vec![0, 2]);
    }

    #[test]
    fn lru_repeated_item_inserts_once() {
        let mut p = LruPolicy::new(2, 2, 4);
        for _ in 0..5 {
            p.on_request(1).unwrap();
        }
        assert_eq!(items(p.cache()), vec![1]);
        assert_eq!(p.cache().used(), 2);
    }

    #[test]
    fn oversized_items_are_never_cached() {
        let mut lru = LruPolicy::new(2, 3, 2);
        let mut lfu = LfuPolicy::new(2, 3, 2, DreCounter::new(2, 0.5, 1e4).unwrap());
        lru.on_request(0).unwrap();
        lfu.on_request(0, 0.0).unwrap();
        assert_eq!(lru.cache().used(), 0);
        assert_eq!(lfu.cache().used(), 0);
    }

    #[test]
    fn lfu_evicts_least_frequent() {
        let mut p = LfuPolicy::new(3, 1, 2, DreCounter::new(3, 1.0, 1e4).unwrap());
        for _ in 0..5 {
            p.on_request(0, 0.0).unwrap();
        }
        p.on_request(1, 0.0).unwrap();
        let evicted = p.on_request(2, 0.0).unwrap();
        assert_eq!(evicted, vec![1]);
        assert_eq!(items(p.cache()), vec![0, 2]);
    }

    #[test]
    fn lfu_breaks_count_ties_by_recency() {
        let mut p = LfuPolicy::new(3, 1, 2, DreCounter::new(3, 1.0, 1e4).unwrap());
        for m in [1, 0] {
            p.on_request(m, 0.0).unwrap();
        }
        assert_eq!(p.on_request(2, 0.0).unwrap(), vec![1]);
    }

    #[test]
    fn agar_picks_largest_gains() {
        let v = ValuationArray::from_tau_rows(&[vec![0.0, 10.0], vec![0.0, 9.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(agar_configure(&v, 2), vec![1, 1, 0]);
    }

    #[test]
    fn agar_fills_a_dominant_item_first() {
        let v = ValuationArray::from_tau_rows(&[vec![0.0, 50.0, 90.0, 120.0], vec![0.0, 1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(agar_configure(&v, 3), vec![3, 0]);
    }

    #[test]
    fn agar_looks_past_flat_steps() {
        // A single-chunk step gains nothing; the whole item is still worth buying.
        let v = ValuationArray::from_tau_rows(&[vec![0.0, 0.0, 100.0], vec![0.0, 1.0, 1.0]]).unwrap();
        assert_eq!(agar_configure(&v, 2), vec![2, 0]);
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyKind::ALL {
            assert_eq!(p.name().parse::<PolicyKind>().unwrap(), p);
        }
        assert!("fifo".parse::<PolicyKind>().is_err());
    }
}

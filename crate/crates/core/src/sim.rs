//! Synthetic coded store: placements, workloads, latency sampling and degraded reads.
//!
//! Latencies are drawn per request and per server from a truncated normal around the
//! node's mean. Draws for request `i` come from their own RNG stream, so every policy
//! replaying the same trace sees exactly the same network.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CacheState, LatencyProfile, PlacementMap, ServerLoc, SystemConfig};

/// Default cost of reconstructing an item from a set that includes a parity chunk.
pub const DEFAULT_DECODE_MS: f64 = 18.82;

/// Places the `K + R` chunks of every item on distinct servers chosen uniformly.
pub fn generate_placement(config: &SystemConfig, seed: u64) -> Result<PlacementMap> {
    config.validate()?;
    let (k, r) = (config.k_data, config.r_parity);
    let spn = config.servers_per_node;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(config.n_items * k);
    let mut parity = Vec::with_capacity(config.n_items * r);
    for _ in 0..config.n_items {
        let picks = index::sample(&mut rng, config.total_servers(), k + r);
        for (j, flat) in picks.into_iter().enumerate() {
            let loc = ServerLoc::new(flat / spn, flat % spn);
            if j < k {
                data.push(loc);
            } else {
                parity.push(loc);
            }
        }
    }
    PlacementMap::new(k, r, data, parity)
}

/// Per-node latency distribution: a normal around the node mean with standard deviation
/// `std_frac * mean`, truncated to `mean +- trunc_sigma * std` and floored at `floor_ms`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyModel {
    base: Vec<f64>,
    std_frac: f64,
    trunc_sigma: f64,
    floor_ms: f64,
    seed: u64,
}

impl LatencyModel {
    pub fn new(profile: &LatencyProfile, std_frac: f64, trunc_sigma: f64, floor_ms: f64, seed: u64) -> Result<Self> {
        if !(std_frac.is_finite() && std_frac >= 0.0) {
            return Err(Error::config("latency.jitter_std_frac", "must be nonnegative"));
        }
        if !(trunc_sigma.is_finite() && trunc_sigma > 0.0) {
            return Err(Error::config("latency.trunc_sigma", "must be positive"));
        }
        if !(floor_ms.is_finite() && floor_ms > 0.0) {
            return Err(Error::config("latency.floor_ms", "must be positive"));
        }
        Ok(LatencyModel {
            base: profile.latencies().to_vec(),
            std_frac,
            trunc_sigma,
            floor_ms,
            seed,
        })
    }

    /// Mean latencies with no jitter.
    pub fn fixed(profile: &LatencyProfile) -> Self {
        LatencyModel {
            base: profile.latencies().to_vec(),
            std_frac: 0.0,
            trunc_sigma: 3.0,
            floor_ms: 1.0,
            seed: 0,
        }
    }

    pub fn base(&self, node: usize) -> f64 {
        self.base[node]
    }

    pub fn n_nodes(&self) -> usize {
        self.base.len()
    }

    fn draw<R: rand::Rng>(&self, node: usize, rng: &mut R) -> f64 {
        let mean = self.base[node];
        let std = self.std_frac * mean;
        if std == 0.0 {
            return mean;
        }
        let normal = Normal::new(mean, std).expect("finite positive std");
        let (lo, hi) = (mean - self.trunc_sigma * std, mean + self.trunc_sigma * std);
        loop {
            let x = normal.sample(rng);
            if (lo..=hi).contains(&x) {
                return x.max(self.floor_ms);
            }
        }
    }

    /// One latency draw for every server, indexed `node * servers_per_node + server`,
    /// for request number `request`.
    pub fn sample_servers(&self, request: u64, servers_per_node: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(request);
        (0..self.base.len() * servers_per_node)
            .map(|flat| self.draw(flat / servers_per_node, &mut rng))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Popularity {
    /// Rank `i` (1-based) is requested with probability proportional to `i^-s`.
    Zipf { tail_index: f64 },
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub n_requests: usize,
    pub popularity: Popularity,
    /// Requests arrive at a fixed rate over this span.
    pub duration_ms: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub times_ms: Vec<f64>,
    pub items: Vec<usize>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Last arrival, the span used to turn counts into rates.
    pub fn span_ms(&self) -> f64 {
        self.times_ms.last().copied().unwrap_or(0.0)
    }

    pub fn counts(&self, n_items: usize) -> Vec<u64> {
        let mut c = vec![0; n_items];
        for &m in &self.items {
            c[m] += 1;
        }
        c
    }
}

/// Draws a request trace. Popularity ranks map to items through a seeded shuffle.
pub fn generate_trace(spec: &WorkloadSpec, n_items: usize) -> Result<Trace> {
    if n_items == 0 {
        return Err(Error::config("system.n_items", "must be at least 1"));
    }
    if !(spec.duration_ms.is_finite() && spec.duration_ms >= 0.0) {
        return Err(Error::config("workload.duration_ms", "must be nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rank_to_item: Vec<usize> = (0..n_items).collect();
    rank_to_item.shuffle(&mut rng);
    let step = if spec.n_requests == 0 {
        0.0
    } else {
        spec.duration_ms / spec.n_requests as f64
    };
    let times_ms = (0..spec.n_requests).map(|i| i as f64 * step).collect();
    let items = match spec.popularity {
        Popularity::Zipf { tail_index } => {
            if !(tail_index.is_finite() && tail_index >= 0.0) {
                return Err(Error::config("workload.tail_index", "must be nonnegative"));
            }
            let zipf = Zipf::new(n_items as f64, tail_index)
                .map_err(|e| Error::config("workload.tail_index", e.to_string()))?;
            (0..spec.n_requests)
                .map(|_| rank_to_item[zipf.sample(&mut rng) as usize - 1])
                .collect()
        }
        Popularity::Uniform => {
            let dist = rand::distr::Uniform::new(0, n_items).expect("n_items > 0");
            (0..spec.n_requests).map(|_| dist.sample(&mut rng)).collect()
        }
    };
    Ok(Trace { times_ms, items })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureScenario {
    pub failed_server: Option<ServerLoc>,
    pub decode_latency_ms: f64,
}

impl Default for FailureScenario {
    fn default() -> Self {
        FailureScenario {
            failed_server: None,
            decode_latency_ms: DEFAULT_DECODE_MS,
        }
    }
}

impl FailureScenario {
    pub fn is_failed(&self, loc: ServerLoc) -> bool {
        self.failed_server == Some(loc)
    }
}

/// A chunk fetched over the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fetch {
    pub loc: ServerLoc,
    pub parity: bool,
    /// Data or parity chunk index.
    pub index: usize,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceOutcome {
    /// Slowest fetch, plus the decode cost of a degraded read; 0 on a full hit.
    pub latency_ms: f64,
    /// Data chunks served from the cache.
    pub hit_chunks: usize,
    pub degraded: bool,
    pub decode_ms: f64,
    pub fetched: Vec<Fetch>,
    /// Data chunks rebuilt from parity.
    pub recovered: Vec<usize>,
}

impl ServiceOutcome {
    /// `(node, latency)` of every fetch, for the latency estimators.
    pub fn node_samples(&self) -> Vec<(usize, f64)> {
        self.fetched.iter().map(|f| (f.loc.node, f.latency_ms)).collect()
    }
}

/// Serves one read of `item` given this request's per-server latency draws.
pub fn serve_request(
    placement: &PlacementMap,
    servers_per_node: usize,
    samples: &[f64],
    cache: &CacheState,
    failure: &FailureScenario,
    item: usize,
) -> Result<ServiceOutcome> {
    if item >= placement.n_items() {
        return Err(Error::domain(format!("unknown item {item}")));
    }
    let k = placement.k_data();
    let sample = |loc: ServerLoc| samples[loc.flat(servers_per_node)];
    let mut fetched = Vec::new();
    let mut recovered = Vec::new();
    for (index, &loc) in placement.data_locs(item).iter().enumerate() {
        if cache.holds(item, index) {
            continue;
        }
        if failure.is_failed(loc) {
            recovered.push(index);
        } else {
            fetched.push(Fetch {
                loc,
                parity: false,
                index,
                latency_ms: sample(loc),
            });
        }
    }
    if !recovered.is_empty() {
        let mut spares: Vec<Fetch> = placement
            .parity_locs(item)
            .iter()
            .enumerate()
            .filter(|(_, loc)| !failure.is_failed(**loc))
            .map(|(index, &loc)| Fetch {
                loc,
                parity: true,
                index,
                latency_ms: sample(loc),
            })
            .collect();
        if spares.len() < recovered.len() {
            return Err(Error::Irrecoverable {
                item,
                missing: recovered.len(),
                parity: spares.len(),
            });
        }
        spares.sort_by(|a, b| a.latency_ms.total_cmp(&b.latency_ms).then(a.index.cmp(&b.index)));
        fetched.extend(spares.into_iter().take(recovered.len()));
    }
    let degraded = !recovered.is_empty();
    let decode_ms = if degraded { failure.decode_latency_ms } else { 0.0 };
    let slowest = fetched.iter().map(|f| f.latency_ms).fold(0.0, f64::max);
    Ok(ServiceOutcome {
        latency_ms: slowest + decode_ms,
        hit_chunks: (0..k).filter(|&i| cache.holds(item, i)).count(),
        degraded,
        decode_ms,
        fetched,
        recovered,
    })
}

/// Caches the rebuilt data chunk `chunk` of `item`.
pub fn recover_and_cache(cache: &mut CacheState, item: usize, chunk: usize) -> Result<()> {
    cache.add_chunk(item, chunk)
}

/// Keeps the cached level of `item` but makes sure the rebuilt chunk is one of the cached
/// ones, dropping the cached chunk with the lowest mean latency to make room.
pub fn swap_in_recovered(
    cache: &mut CacheState,
    placement: &PlacementMap,
    model: &LatencyModel,
    item: usize,
    chunk: usize,
) -> Result<bool> {
    if cache.epsilon(item) == 0 || cache.holds(item, chunk) {
        return Ok(false);
    }
    let locs = placement.data_locs(item);
    let victim = cache
        .cached_chunks(item)
        .iter()
        .copied()
        .min_by(|&a, &b| {
            model
                .base(locs[a].node)
                .total_cmp(&model.base(locs[b].node))
                .then(b.cmp(&a))
        })
        .expect("item has cached chunks");
    let kept: Vec<usize> = cache.cached_chunks(item).iter().copied().filter(|&c| c != victim).collect();
    cache.set_chunks(item, kept)?;
    recover_and_cache(cache, item, chunk)?;
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(n_nodes: usize, spn: usize, k: usize, r: usize) -> SystemConfig {
        SystemConfig {
            n_nodes,
            servers_per_node: spn,
            n_items: 50,
            k_data: k,
            r_parity: r,
            capacity: 10,
            chunk_size_mb: 1.0,
        }
    }

    #[test]
    fn placement_uses_distinct_servers() {
        let p = generate_placement(&config(6, 3, 6, 3), 7).unwrap();
        for m in 0..p.n_items() {
            let mut all: Vec<usize> = p.data_locs(m).iter().chain(p.parity_locs(m)).map(|l| l.flat(3)).collect();
            all.sort();
            all.dedup();
            assert_eq!(all.len(), 9);
            assert!(all.iter().all(|&s| s < 18));
        }
    }

    #[test]
    fn placement_filling_every_server_is_a_permutation() {
        let p = generate_placement(&config(2, 2, 3, 1), 1).unwrap();
        let mut all: Vec<usize> = p.data_locs(0).iter().chain(p.parity_locs(0)).map(|l| l.flat(2)).collect();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3]);
    }

    #[test]
    fn placement_is_seeded() {
        let c = config(6, 3, 6, 3);
        assert_eq!(generate_placement(&c, 3).unwrap(), generate_placement(&c, 3).unwrap());
        assert_ne!(generate_placement(&c, 3).unwrap(), generate_placement(&c, 4).unwrap());
    }

    #[test]
    fn infeasible_placement_names_key() {
        let err = generate_placement(&config(2, 2, 4, 1), 1).unwrap_err();
        assert!(matches!(err, Error::Config { key, .. } if key == "system.r_parity"));
    }

    #[test]
    fn jitter_stays_positive_and_centred() {
        let model = LatencyModel::new(&LatencyProfile::new(vec![2.0, 128.3]).unwrap(), 0.5, 3.0, 1.0, 9).unwrap();
        let mut sum = 0.0;
        let n = 20_000;
        for i in 0..n {
            let s = model.sample_servers(i, 1);
            assert!(s[0] >= 1.0 && s[1] > 0.0);
            sum += s[1];
        }
        let mean = sum / n as f64;
        assert!((mean - 128.3).abs() / 128.3 < 0.02, "mean {mean}");
    }

    #[test]
    fn same_request_draws_are_reproducible() {
        let model = LatencyModel::new(&LatencyProfile::victoria(), 0.1, 3.0, 1.0, 5).unwrap();
        assert_eq!(model.sample_servers(17, 3), model.sample_servers(17, 3));
        assert_ne!(model.sample_servers(17, 3), model.sample_servers(18, 3));
    }

    #[test]
    fn uniform_trace_covers_items() {
        let spec = WorkloadSpec {
            n_requests: 1000,
            popularity: Popularity::Uniform,
            duration_ms: 1000.0,
            seed: 2,
        };
        let t = generate_trace(&spec, 10).unwrap();
        assert_eq!(t.len(), 1000);
        assert!(t.counts(10).iter().all(|&c| c > 50));
        assert_eq!(t.times_ms[1], 1.0);
    }

    fn one_item(k: usize, r: usize) -> PlacementMap {
        let data = (0..k).map(|i| ServerLoc::new(i, 0)).collect();
        let parity = (0..r).map(|i| ServerLoc::new(k + i, 0)).collect();
        PlacementMap::new(k, r, data, parity).unwrap()
    }

    #[test]
    fn full_hit_has_no_latency() {
        let p = one_item(2, 1);
        let mut cache = CacheState::new(1, 2, 2);
        cache.set_chunks(0, vec![0, 1]).unwrap();
        let out = serve_request(&p, 1, &[10.0, 20.0, 30.0], &cache, &FailureScenario::default(), 0).unwrap();
        assert_eq!(out.latency_ms, 0.0);
        assert_eq!(out.hit_chunks, 2);
        assert!(out.fetched.is_empty());
    }

    #[test]
    fn degraded_read_pays_parity_and_decode() {
        let p = one_item(2, 1);
        let cache = CacheState::new(1, 2, 2);
        let failure = FailureScenario {
            failed_server: Some(ServerLoc::new(1, 0)),
            decode_latency_ms: 18.82,
        };
        let out = serve_request(&p, 1, &[10.0, 20.0, 30.0], &cache, &failure, 0).unwrap();
        assert!(out.degraded);
        assert_eq!(out.recovered, vec![1]);
        assert_eq!(out.latency_ms, 30.0 + 18.82);
        assert_eq!(out.node_samples(), vec![(0, 10.0), (2, 30.0)]);
    }

    #[test]
    fn recovered_chunk_avoids_decode_next_time() {
        let p = one_item(2, 1);
        let mut cache = CacheState::new(1, 2, 2);
        let failure = FailureScenario {
            failed_server: Some(ServerLoc::new(1, 0)),
            decode_latency_ms: 18.82,
        };
        let first = serve_request(&p, 1, &[10.0, 20.0, 30.0], &cache, &failure, 0).unwrap();
        recover_and_cache(&mut cache, 0, first.recovered[0]).unwrap();
        let second = serve_request(&p, 1, &[10.0, 20.0, 30.0], &cache, &failure, 0).unwrap();
        assert!(!second.degraded);
        assert_eq!(second.latency_ms, 10.0);
    }

    #[test]
    fn parity_shortage_is_irrecoverable() {
        let p = one_item(2, 1);
        let cache = CacheState::new(1, 2, 2);
        let failure = FailureScenario {
            failed_server: Some(ServerLoc::new(2, 0)),
            decode_latency_ms: 1.0,
        };
        // Only the parity server failed: the read is clean.
        assert!(!serve_request(&p, 1, &[1.0, 2.0, 3.0], &cache, &failure, 0).unwrap().degraded);
        let p0 = PlacementMap::new(2, 0, vec![ServerLoc::new(0, 0), ServerLoc::new(1, 0)], vec![]).unwrap();
        let failure = FailureScenario {
            failed_server: Some(ServerLoc::new(0, 0)),
            decode_latency_ms: 1.0,
        };
        assert!(matches!(
            serve_request(&p0, 1, &[1.0, 2.0], &cache, &failure, 0),
            Err(Error::Irrecoverable { .. })
        ));
    }

    #[test]
    fn swap_keeps_level() {
        let p = one_item(3, 1);
        let model = LatencyModel::fixed(&LatencyProfile::new(vec![300.0, 100.0, 200.0, 50.0]).unwrap());
        let mut cache = CacheState::new(1, 3, 2);
        cache.set_chunks(0, vec![0, 2]).unwrap();
        assert!(swap_in_recovered(&mut cache, &p, &model, 0, 1).unwrap());
        assert_eq!(cache.cached_chunks(0), &[0, 1]);
    }
}

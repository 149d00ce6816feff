//! System model: configuration, chunk placement, per-node latency, valuation arrays and
//! the cache state shared by every policy.
//!
//! Items, chunk indices, nodes and servers are all zero-based. A data chunk is identified
//! by `(item, index)` with `index < k_data`; parity chunks use `index < r_parity`.
//!
//! For each item the data chunks are ranked by descending access latency (ties broken by
//! ascending node id, then chunk index). With `l_1 >= .. >= l_K` the sorted latencies and
//! `r` the request rate, caching `e` chunks leaves `f(e) = l_{e+1}` (or 0 when `e = K`)
//! as the bottleneck, and the reduced-latency valuation is `tau[e] = (l_1 - f(e)) * r`.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Storage regions of the six-node reference deployment.
pub const REGIONS: [&str; 6] = [
    "Tokyo",
    "Ohio",
    "Ireland",
    "Sao Paulo",
    "Oregon",
    "Northern California",
];

/// Mean chunk access latency (ms) from each region to a frontend in Victoria, CA.
pub const VICTORIA_MS: [f64; 6] = [479.3, 345.5, 686.3, 803.9, 128.3, 179.3];
/// Same, for a frontend in San Francisco, US.
pub const SAN_FRANCISCO_MS: [f64; 6] = [513.2, 338.4, 663.2, 786.9, 158.3, 84.7];
/// Same, for a frontend in Toronto, CA.
pub const TORONTO_MS: [f64; 6] = [794.7, 129.0, 631.5, 705.5, 302.6, 355.7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub n_nodes: usize,
    pub servers_per_node: usize,
    pub n_items: usize,
    pub k_data: usize,
    pub r_parity: usize,
    /// Cache capacity in chunks.
    pub capacity: usize,
    pub chunk_size_mb: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            n_nodes: 6,
            servers_per_node: 3,
            n_items: 1000,
            k_data: 6,
            r_parity: 3,
            capacity: 100,
            chunk_size_mb: 1.0,
        }
    }
}

impl SystemConfig {
    pub fn total_servers(&self) -> usize {
        self.n_nodes * self.servers_per_node
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 {
            return Err(Error::config("system.n_nodes", "must be at least 1"));
        }
        if self.servers_per_node == 0 {
            return Err(Error::config("system.servers_per_node", "must be at least 1"));
        }
        if self.k_data == 0 {
            return Err(Error::config("system.k_data", "must be at least 1"));
        }
        if self.k_data + self.r_parity > self.total_servers() {
            return Err(Error::config(
                "system.r_parity",
                format!(
                    "k_data + r_parity = {} chunks cannot sit on distinct servers ({} available)",
                    self.k_data + self.r_parity,
                    self.total_servers()
                ),
            ));
        }
        if self.capacity > self.n_items * self.k_data {
            return Err(Error::config(
                "system.capacity",
                format!(
                    "capacity {} exceeds n_items * k_data = {}",
                    self.capacity,
                    self.n_items * self.k_data
                ),
            ));
        }
        if !(self.chunk_size_mb.is_finite() && self.chunk_size_mb > 0.0) {
            return Err(Error::config("system.chunk_size_mb", "must be positive"));
        }
        Ok(())
    }
}

/// A storage server: `server` is the index within `node`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ServerLoc {
    pub node: usize,
    pub server: usize,
}

impl ServerLoc {
    pub fn new(node: usize, server: usize) -> Self {
        ServerLoc { node, server }
    }

    /// Flat index in `0..n_nodes * servers_per_node`.
    pub fn flat(&self, servers_per_node: usize) -> usize {
        self.node * servers_per_node + self.server
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkKind {
    Data,
    Parity,
}

/// Location of every data and parity chunk of every item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementMap {
    k_data: usize,
    r_parity: usize,
    data: Vec<ServerLoc>,
    parity: Vec<ServerLoc>,
}

impl PlacementMap {
    /// `data` holds `n_items * k_data` locations item-major, `parity` holds
    /// `n_items * r_parity`. All chunks of one item must sit on distinct servers.
    pub fn new(
        k_data: usize,
        r_parity: usize,
        data: Vec<ServerLoc>,
        parity: Vec<ServerLoc>,
    ) -> Result<Self> {
        if k_data == 0 {
            return Err(Error::domain("k_data must be at least 1"));
        }
        if !data.len().is_multiple_of(k_data) {
            return Err(Error::domain("data locations are not a multiple of k_data"));
        }
        let n_items = data.len() / k_data;
        if parity.len() != n_items * r_parity {
            return Err(Error::domain(format!(
                "expected {} parity locations, got {}",
                n_items * r_parity,
                parity.len()
            )));
        }
        let map = PlacementMap {
            k_data,
            r_parity,
            data,
            parity,
        };
        for item in 0..n_items {
            let mut seen = BTreeSet::new();
            for loc in map.data_locs(item).iter().chain(map.parity_locs(item)) {
                if !seen.insert(*loc) {
                    return Err(Error::domain(format!(
                        "item {item} places two chunks on server ({}, {})",
                        loc.node, loc.server
                    )));
                }
            }
        }
        Ok(map)
    }

    pub fn n_items(&self) -> usize {
        self.data.len() / self.k_data
    }

    pub fn k_data(&self) -> usize {
        self.k_data
    }

    pub fn r_parity(&self) -> usize {
        self.r_parity
    }

    pub fn data_locs(&self, item: usize) -> &[ServerLoc] {
        &self.data[item * self.k_data..(item + 1) * self.k_data]
    }

    pub fn parity_locs(&self, item: usize) -> &[ServerLoc] {
        &self.parity[item * self.r_parity..(item + 1) * self.r_parity]
    }

    pub fn data_loc(&self, item: usize, index: usize) -> Result<ServerLoc> {
        if item >= self.n_items() {
            return Err(Error::domain(format!(
                "unknown item {item} (placement holds {})",
                self.n_items()
            )));
        }
        if index >= self.k_data {
            return Err(Error::domain(format!(
                "data chunk index {index} out of range (k_data = {})",
                self.k_data
            )));
        }
        Ok(self.data[item * self.k_data + index])
    }

    pub fn max_node(&self) -> Option<usize> {
        self.data.iter().chain(&self.parity).map(|l| l.node).max()
    }
}

/// Mean access latency (ms) from each storage node to one frontend.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyProfile {
    node_latency: Vec<f64>,
}

impl LatencyProfile {
    pub fn new(node_latency: Vec<f64>) -> Result<Self> {
        if node_latency.is_empty() {
            return Err(Error::domain("latency profile has no nodes"));
        }
        if let Some((i, l)) = node_latency
            .iter()
            .enumerate()
            .find(|(_, l)| !(l.is_finite() && **l > 0.0))
        {
            return Err(Error::domain(format!(
                "node {i} latency {l} is not strictly positive and finite"
            )));
        }
        Ok(LatencyProfile { node_latency })
    }

    pub fn victoria() -> Self {
        LatencyProfile {
            node_latency: VICTORIA_MS.to_vec(),
        }
    }

    pub fn san_francisco() -> Self {
        LatencyProfile {
            node_latency: SAN_FRANCISCO_MS.to_vec(),
        }
    }

    pub fn toronto() -> Self {
        LatencyProfile {
            node_latency: TORONTO_MS.to_vec(),
        }
    }

    /// Looks up one of the reference frontends by name.
    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "victoria" => Some(Self::victoria()),
            "sanfrancisco" => Some(Self::san_francisco()),
            "toronto" => Some(Self::toronto()),
            _ => None,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.node_latency.len()
    }

    pub fn latency(&self, node: usize) -> Result<f64> {
        self.node_latency
            .get(node)
            .copied()
            .ok_or_else(|| Error::domain(format!("unknown node {node}")))
    }

    pub fn latencies(&self) -> &[f64] {
        &self.node_latency
    }
}

/// Latency of sending data chunk `index` of `item`: the latency of the node hosting it.
pub fn chunk_latency(
    placement: &PlacementMap,
    profile: &LatencyProfile,
    item: usize,
    index: usize,
) -> Result<f64> {
    let loc = placement.data_loc(item, index)?;
    profile.latency(loc.node)
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    cols: usize,
    data: Vec<f64>,
}

impl ValueTable {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ValueTable {
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::domain(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(ValueTable { cols, data })
    }

    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.cols).unwrap_or(0)
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.cols + col] = v;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }
}

/// Latency of one data chunk of an item, used to rank chunks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkLatency {
    pub index: usize,
    pub node: usize,
    pub latency: f64,
}

/// Descending latency, then ascending node id, then ascending chunk index.
fn farthest_first(a: &ChunkLatency, b: &ChunkLatency) -> Ordering {
    b.latency
        .total_cmp(&a.latency)
        .then(a.node.cmp(&b.node))
        .then(a.index.cmp(&b.index))
}

/// The `M x (K+1)` reduced-latency valuation array and the per-item chunk ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuationArray {
    k: usize,
    tau: ValueTable,
    order: Vec<usize>,
    /// Sorted chunk latencies aligned with `order`; absent for raw tables.
    latency: Option<Vec<f64>>,
}

impl ValuationArray {
    /// An all-zero valuation for `n_items` items.
    pub fn zeros(n_items: usize, k: usize) -> Self {
        ValuationArray {
            k,
            tau: ValueTable::zeros(n_items, k + 1),
            order: (0..n_items).flat_map(|_| 0..k).collect(),
            latency: Some(vec![0.0; n_items * k]),
        }
    }

    /// Wraps a raw `tau` table (rows of `K+1` values). Chunk ranking defaults to index
    /// order and `item_latency` is unavailable.
    pub fn from_tau_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let tau = ValueTable::from_rows(rows)?;
        if tau.rows() > 0 && tau.cols() < 2 {
            return Err(Error::domain("a valuation row needs at least two columns"));
        }
        if let Some(v) = rows.iter().flatten().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("valuation entry {v} is not finite")));
        }
        let k = tau.cols().saturating_sub(1);
        Ok(ValuationArray {
            k,
            order: (0..tau.rows()).flat_map(|_| 0..k).collect(),
            tau,
            latency: None,
        })
    }

    /// Builds a valuation from per-item chunk latencies. `chunks(m)` must yield the
    /// `K` data chunks of item `m`.
    pub fn from_chunk_latencies<F>(n_items: usize, k: usize, rates: &[f64], mut chunks: F) -> Result<Self>
    where
        F: FnMut(usize) -> Result<Vec<ChunkLatency>>,
    {
        if rates.len() != n_items {
            return Err(Error::domain(format!(
                "{} request rates for {n_items} items",
                rates.len()
            )));
        }
        let mut v = ValuationArray::zeros(n_items, k);
        for (m, &rate) in rates.iter().enumerate() {
            let row = chunks(m)?;
            v.set_item(m, row, rate)?;
        }
        Ok(v)
    }

    /// Recomputes the row of `item` from its current chunk latencies and request rate.
    pub fn set_item(&mut self, item: usize, mut chunks: Vec<ChunkLatency>, rate: f64) -> Result<()> {
        if chunks.len() != self.k {
            return Err(Error::domain(format!(
                "item {item} has {} chunk latencies, expected {}",
                chunks.len(),
                self.k
            )));
        }
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::domain(format!("request rate {rate} is negative or not finite")));
        }
        chunks.sort_by(farthest_first);
        let k = self.k;
        let slowest = chunks[0].latency;
        let row = self.tau.row_mut(item);
        row[0] = 0.0;
        for e in 1..k {
            row[e] = (slowest - chunks[e].latency) * rate;
        }
        row[k] = slowest * rate;
        for (j, c) in chunks.iter().enumerate() {
            self.order[item * k + j] = c.index;
        }
        let lat = self.latency.get_or_insert_with(|| vec![0.0; self.order.len()]);
        for (j, c) in chunks.iter().enumerate() {
            lat[item * k + j] = c.latency;
        }
        Ok(())
    }

    pub fn n_items(&self) -> usize {
        self.tau.rows()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn tau(&self, item: usize, level: usize) -> f64 {
        self.tau.get(item, level)
    }

    pub fn row(&self, item: usize) -> &[f64] {
        self.tau.row(item)
    }

    pub fn table(&self) -> &ValueTable {
        &self.tau
    }

    /// Data chunk indices of `item`, farthest first.
    pub fn sorted_chunks(&self, item: usize) -> &[usize] {
        &self.order[item * self.k..(item + 1) * self.k]
    }

    /// Chunk latencies of `item` aligned with [`sorted_chunks`](Self::sorted_chunks).
    pub fn sorted_latencies(&self, item: usize) -> Option<&[f64]> {
        self.latency
            .as_ref()
            .map(|l| &l[item * self.k..(item + 1) * self.k])
    }

    /// `f_m(eps)`: the latency of the `(eps+1)`-th slowest data chunk, 0 when `eps = K`.
    pub fn item_latency(&self, item: usize, eps: usize) -> Result<f64> {
        if item >= self.n_items() {
            return Err(Error::domain(format!("unknown item {item}")));
        }
        if eps > self.k {
            return Err(Error::domain(format!(
                "cached chunk count {eps} exceeds k = {}",
                self.k
            )));
        }
        let lat = self
            .sorted_latencies(item)
            .ok_or_else(|| Error::domain("valuation carries no chunk latencies"))?;
        Ok(if eps == self.k { 0.0 } else { lat[eps] })
    }

    /// `Theta = sum_m tau[m][eps_m]`, summed in item order.
    pub fn objective(&self, eps: &[usize]) -> f64 {
        eps.iter()
            .enumerate()
            .map(|(m, &e)| self.tau(m, e))
            .sum()
    }

    /// Copies the rows of `items` (in the given order) into a new valuation.
    pub fn subset(&self, items: &[usize]) -> ValuationArray {
        let k = self.k;
        let mut tau = ValueTable::zeros(items.len(), k + 1);
        let mut order = Vec::with_capacity(items.len() * k);
        let mut latency = self.latency.as_ref().map(|_| Vec::with_capacity(items.len() * k));
        for (i, &m) in items.iter().enumerate() {
            tau.row_mut(i).copy_from_slice(self.row(m));
            order.extend_from_slice(self.sorted_chunks(m));
            if let (Some(dst), Some(src)) = (latency.as_mut(), self.sorted_latencies(m)) {
                dst.extend_from_slice(src);
            }
        }
        ValuationArray {
            k,
            tau,
            order,
            latency,
        }
    }
}

/// Builds the valuation array from a placement, a latency profile and request rates.
pub fn build_valuation(
    placement: &PlacementMap,
    profile: &LatencyProfile,
    rates: &[f64],
) -> Result<ValuationArray> {
    ValuationArray::from_chunk_latencies(placement.n_items(), placement.k_data(), rates, |m| {
        placement
            .data_locs(m)
            .iter()
            .enumerate()
            .map(|(index, loc)| {
                Ok(ChunkLatency {
                    index,
                    node: loc.node,
                    latency: profile.latency(loc.node)?,
                })
            })
            .collect()
    })
}

/// Per-item cached data chunks at one frontend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheState {
    capacity: usize,
    k: usize,
    chunks: Vec<Vec<usize>>,
    cached: BTreeSet<usize>,
    used: usize,
}

impl CacheState {
    pub fn new(n_items: usize, k: usize, capacity: usize) -> Self {
        CacheState {
            capacity,
            k,
            chunks: vec![Vec::new(); n_items],
            cached: BTreeSet::new(),
            used: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_items(&self) -> usize {
        self.chunks.len()
    }

    /// Total cached chunks, `sum_m eps_m`.
    pub fn used(&self) -> usize {
        self.used
    }

    pub fn free(&self) -> usize {
        self.capacity - self.used
    }

    pub fn epsilon(&self, item: usize) -> usize {
        self.chunks[item].len()
    }

    pub fn epsilons(&self) -> Vec<usize> {
        self.chunks.iter().map(Vec::len).collect()
    }

    /// Items with at least one cached chunk, ascending.
    pub fn cached_items(&self) -> impl Iterator<Item = usize> + '_ {
        self.cached.iter().copied()
    }

    pub fn cached_chunks(&self, item: usize) -> &[usize] {
        &self.chunks[item]
    }

    pub fn holds(&self, item: usize, chunk: usize) -> bool {
        self.chunks[item].contains(&chunk)
    }

    /// Replaces the cached chunks of `item`.
    pub fn set_chunks(&mut self, item: usize, mut chunks: Vec<usize>) -> Result<()> {
        if item >= self.chunks.len() {
            return Err(Error::domain(format!("unknown item {item}")));
        }
        chunks.sort_unstable();
        chunks.dedup();
        if let Some(&c) = chunks.last() {
            if c >= self.k {
                return Err(Error::domain(format!("chunk index {c} out of range")));
            }
        }
        let used = self.used - self.chunks[item].len() + chunks.len();
        if used > self.capacity {
            return Err(Error::Capacity {
                used,
                capacity: self.capacity,
            });
        }
        self.used = used;
        if chunks.is_empty() {
            self.cached.remove(&item);
        } else {
            self.cached.insert(item);
        }
        self.chunks[item] = chunks;
        Ok(())
    }

    /// Caches the `eps` farthest chunks of `item` according to `valuation`.
    pub fn set_level(&mut self, item: usize, eps: usize, valuation: &ValuationArray) -> Result<()> {
        if eps > self.k {
            return Err(Error::domain(format!("level {eps} exceeds k = {}", self.k)));
        }
        let chunks = valuation.sorted_chunks(item)[..eps].to_vec();
        self.set_chunks(item, chunks)
    }

    /// Adds a single data chunk to `item`.
    pub fn add_chunk(&mut self, item: usize, chunk: usize) -> Result<()> {
        if self.holds(item, chunk) {
            return Ok(());
        }
        let mut chunks = self.chunks[item].clone();
        chunks.push(chunk);
        self.set_chunks(item, chunks)
    }

    pub fn evict(&mut self, item: usize) {
        self.used -= self.chunks[item].len();
        self.chunks[item].clear();
        self.cached.remove(&item);
    }

    pub fn clear(&mut self) {
        for m in std::mem::take(&mut self.cached) {
            self.chunks[m].clear();
        }
        self.used = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_item(nodes: &[usize]) -> PlacementMap {
        let data = nodes.iter().map(|&n| ServerLoc::new(n, 0)).collect();
        PlacementMap::new(nodes.len(), 0, data, vec![]).unwrap()
    }

    fn rows(v: &ValuationArray) -> Vec<Vec<f64>> {
        (0..v.n_items()).map(|m| v.row(m).to_vec()).collect()
    }

    #[test]
    fn chunk_latency_reads_host_node() {
        // Tokyo = node 0, Oregon = node 4.
        let p = one_item(&[0, 4]);
        let vic = LatencyProfile::victoria();
        assert_eq!(chunk_latency(&p, &vic, 0, 0).unwrap(), 479.3);
        assert_eq!(chunk_latency(&p, &vic, 0, 1).unwrap(), 128.3);
        let flat = LatencyProfile::new(vec![42.0; 6]).unwrap();
        assert_eq!(chunk_latency(&p, &flat, 0, 1).unwrap(), 42.0);
    }

    #[test]
    fn chunk_latency_rejects_unknown_indices() {
        let p = one_item(&[0, 4]);
        let vic = LatencyProfile::victoria();
        assert!(matches!(chunk_latency(&p, &vic, 1, 0), Err(Error::Domain(_))));
        assert!(matches!(chunk_latency(&p, &vic, 0, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn valuation_from_sorted_latencies() {
        let profile = LatencyProfile::new(vec![100.0, 600.0, 800.0]).unwrap();
        let p = one_item(&[0, 1, 2]);
        let v = build_valuation(&p, &profile, &[2.0]).unwrap();
        assert_eq!(v.row(0), &[0.0, 400.0, 1400.0, 1600.0]);
        assert_eq!(v.sorted_chunks(0), &[2, 1, 0]);
        assert_eq!(v.item_latency(0, 1).unwrap(), 600.0);
        assert_eq!(v.item_latency(0, 3).unwrap(), 0.0);
        assert!(v.item_latency(0, 4).is_err());

        let zero = build_valuation(&p, &profile, &[0.0]).unwrap();
        assert_eq!(zero.row(0), &[0.0; 4]);
    }

    #[test]
    fn equidistant_chunks_gain_nothing_until_full() {
        let profile = LatencyProfile::new(vec![250.0; 4]).unwrap();
        let p = one_item(&[0, 1, 2, 3]);
        let v = build_valuation(&p, &profile, &[1.0]).unwrap();
        assert_eq!(rows(&v), vec![vec![0.0, 0.0, 0.0, 0.0, 250.0]]);
    }

    #[test]
    fn ties_rank_by_node_then_index() {
        // Chunks 0 and 2 both sit on a node at 300 ms; nodes 3 and 1.
        let profile = LatencyProfile::new(vec![10.0, 300.0, 20.0, 300.0]).unwrap();
        let data = vec![
            ServerLoc::new(3, 0),
            ServerLoc::new(0, 0),
            ServerLoc::new(1, 0),
        ];
        let p = PlacementMap::new(3, 0, data, vec![]).unwrap();
        let v = build_valuation(&p, &profile, &[1.0]).unwrap();
        assert_eq!(v.sorted_chunks(0), &[2, 0, 1]);
    }

    #[test]
    fn figure_one_item_b_from_victoria() {
        // Item B: chunks B1..B6 on Oregon, N. California, Ohio, Oregon, Tokyo, Tokyo.
        let data = vec![
            ServerLoc::new(4, 0),
            ServerLoc::new(5, 0),
            ServerLoc::new(1, 0),
            ServerLoc::new(4, 1),
            ServerLoc::new(0, 0),
            ServerLoc::new(0, 1),
        ];
        let p = PlacementMap::new(6, 0, data, vec![]).unwrap();
        let v = build_valuation(&p, &LatencyProfile::victoria(), &[1.0]).unwrap();
        assert_eq!(v.item_latency(0, 0).unwrap(), 479.3);
        assert_eq!(v.sorted_chunks(0)[..2], [4, 5]);
    }

    #[test]
    fn placement_rejects_shared_server() {
        let data = vec![ServerLoc::new(0, 0), ServerLoc::new(0, 0)];
        assert!(PlacementMap::new(2, 0, data, vec![]).is_err());
        let data = vec![ServerLoc::new(0, 0), ServerLoc::new(0, 1)];
        assert!(PlacementMap::new(2, 1, data, vec![ServerLoc::new(0, 1)]).is_err());
    }

    #[test]
    fn profile_rejects_nonpositive() {
        assert!(LatencyProfile::new(vec![1.0, 0.0]).is_err());
        assert!(LatencyProfile::new(vec![f64::NAN]).is_err());
        assert!(LatencyProfile::new(vec![]).is_err());
        assert!(LatencyProfile::preset("San Francisco").is_some());
    }

    #[test]
    fn config_validation_names_the_key() {
        let mut c = SystemConfig::default();
        c.validate().unwrap();
        c.r_parity = 13;
        assert!(matches!(c.validate(), Err(Error::Config { key, .. }) if key == "system.r_parity"));
        let c = SystemConfig {
            capacity: 6001,
            ..SystemConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config { key, .. }) if key == "system.capacity"));
    }

    #[test]
    fn cache_state_tracks_capacity() {
        let p = one_item(&[0, 1, 2]);
        let profile = LatencyProfile::new(vec![100.0, 600.0, 800.0]).unwrap();
        let v = build_valuation(&p, &profile, &[1.0]).unwrap();
        let mut c = CacheState::new(1, 3, 2);
        c.set_level(0, 2, &v).unwrap();
        assert_eq!(c.cached_chunks(0), &[1, 2]);
        assert_eq!(c.used(), 2);
        assert!(matches!(c.set_level(0, 3, &v), Err(Error::Capacity { .. })));
        c.evict(0);
        assert_eq!(c.used(), 0);
        assert_eq!(c.cached_items().count(), 0);
    }
}

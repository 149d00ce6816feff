//! Optimal assignment of items to chunk levels through market-clearing prices.
//!
//! Items are sellers and the levels of a cache partition are buyers: level `k` wants
//! `x_k` items and values item `m` at `tau[m][k]`. Each item carries a price `p_m` and a
//! level's payoff for it is `tau[m][k] - p_m`. A level's preferred sellers are its
//! highest-payoff items. While several levels want the same items, the prices of a
//! constricted set of contested items rise until every level can be served from its
//! preferred sellers without conflict. Clearing prices support an assignment that
//! maximizes `sum_m tau[m][eps_m]` for the partition; [`optimal_offline`] repeats this
//! for every partition and keeps the best.
//!
//! Two price rules are available. [`PriceRule::MinimalRaise`] (the default) raises the
//! prices of a constricted set by the smallest amount that adds a new preferred seller,
//! so clearing prices are reached exactly and the assignment is optimal.
//! [`PriceRule::MarginalBid`] replays the textbook sweep that raises each contested
//! item by `max{unit, max_k (V_k - V_k^m)}`; it is kept for comparison, is not always
//! optimal and may cycle, which surfaces as [`Error::NonTermination`].

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ValuationArray, ValueTable};
use crate::partition::{enumerate_partitions, partition_count_bound, CachePartition};

/// For each level `k = 1..=K` with `x_k > 0`, the items it claims.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PreferredSellerGraph {
    levels: BTreeMap<usize, Vec<usize>>,
}

impl PreferredSellerGraph {
    pub fn level(&self, k: usize) -> &[usize] {
        self.levels.get(&k).map_or(&[], Vec::as_slice)
    }

    pub fn levels(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.levels.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// Levels claiming each item.
    pub fn claims(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut claims: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (&k, items) in &self.levels {
            for &m in items {
                claims.entry(m).or_default().push(k);
            }
        }
        claims
    }

    /// Per-item level when the graph is conflict-free.
    pub fn epsilon(&self, n_items: usize) -> Vec<usize> {
        let mut eps = vec![0; n_items];
        for (&k, items) in &self.levels {
            for &m in items {
                eps[m] = k;
            }
        }
        eps
    }
}

/// Indices of the `x` largest entries of `column`, ties by ascending index.
fn top_items(payoff: &ValueTable, col: usize, x: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..payoff.rows()).collect();
    let cmp = |a: &usize, b: &usize| {
        payoff
            .get(*b, col)
            .total_cmp(&payoff.get(*a, col))
            .then(a.cmp(b))
    };
    if x < idx.len() {
        idx.select_nth_unstable_by(x, cmp);
        idx.truncate(x);
    }
    idx.sort_by(cmp);
    idx
}

/// Each level `k` claims the `x_k` items with the largest payoff in column `k`.
/// Items may be claimed by several levels.
pub fn preferred_seller_graph(payoff: &ValueTable, partition: &CachePartition) -> PreferredSellerGraph {
    let levels = (1..=partition.k())
        .filter(|&k| partition.count(k) > 0)
        .map(|k| (k, top_items(payoff, k, partition.count(k))))
        .collect();
    PreferredSellerGraph { levels }
}

/// Contested items and the levels competing for them.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConstrictedSet {
    pub items: BTreeSet<usize>,
    pub levels: BTreeSet<usize>,
}

impl ConstrictedSet {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty() && self.levels.is_empty()
    }
}

/// Items claimed by two or more levels, and every level claiming one of them.
pub fn constricted_set(graph: &PreferredSellerGraph) -> ConstrictedSet {
    let mut out = ConstrictedSet::default();
    for (m, levels) in graph.claims() {
        if levels.len() > 1 {
            out.items.insert(m);
            out.levels.extend(levels);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriceRule {
    /// Raise a constricted set by the least amount that creates a new preferred seller.
    MinimalRaise,
    /// Raise each contested item by `max{unit, max_k (V_k - V_k^m)}`.
    MarginalBid { unit: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearingOptions {
    pub rule: PriceRule,
    /// Round budget; defaults to `M * (K + 2)` for the marginal-bid rule and a
    /// generous multiple of the partition size for minimal raises.
    pub max_rounds: Option<usize>,
}

impl Default for ClearingOptions {
    fn default() -> Self {
        ClearingOptions {
            rule: PriceRule::MinimalRaise,
            max_rounds: None,
        }
    }
}

impl ClearingOptions {
    pub fn marginal_bid(unit: f64) -> Self {
        ClearingOptions {
            rule: PriceRule::MarginalBid { unit },
            max_rounds: None,
        }
    }
}

/// Caching decision `eps_m` per item and its objective `Theta = sum_m tau[m][eps_m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub epsilon: Vec<usize>,
    pub objective: f64,
}

impl Assignment {
    pub fn empty(n_items: usize) -> Self {
        Assignment {
            epsilon: vec![0; n_items],
            objective: 0.0,
        }
    }

    fn from_epsilon(valuation: &ValuationArray, epsilon: Vec<usize>) -> Self {
        let objective = valuation.objective(&epsilon);
        Assignment { epsilon, objective }
    }

    pub fn chunks(&self) -> usize {
        self.epsilon.iter().sum()
    }
}

/// Prices and payoffs when the market cleared.
#[derive(Debug, Clone, PartialEq)]
pub struct AuctionState {
    pub prices: Vec<f64>,
    /// `tau` minus each row's price.
    pub payoff: ValueTable,
    /// The conflict-free graph the assignment was read from.
    pub graph: PreferredSellerGraph,
    pub constricted: ConstrictedSet,
    pub rounds: usize,
}

fn check_partition(valuation: &ValuationArray, partition: &CachePartition) -> Result<()> {
    if partition.k() != valuation.k() {
        return Err(Error::domain(format!(
            "partition has {} levels, valuation has k = {}",
            partition.k(),
            valuation.k()
        )));
    }
    if partition.items() > valuation.n_items() {
        return Err(Error::domain(format!(
            "partition needs {} items, only {} exist",
            partition.items(),
            valuation.n_items()
        )));
    }
    Ok(())
}

/// Clears the market for one partition and returns the resulting assignment.
pub fn clear_market(
    valuation: &ValuationArray,
    partition: &CachePartition,
    opts: &ClearingOptions,
) -> Result<Assignment> {
    clear_market_with_state(valuation, partition, opts).map(|(a, _)| a)
}

/// Like [`clear_market`], also returning the final prices and graph.
pub fn clear_market_with_state(
    valuation: &ValuationArray,
    partition: &CachePartition,
    opts: &ClearingOptions,
) -> Result<(Assignment, AuctionState)> {
    check_partition(valuation, partition)?;
    let tau = valuation.table();
    let all: Vec<usize> = (0..valuation.n_items()).collect();
    let state = match opts.rule {
        PriceRule::MinimalRaise => {
            let mut market = Market::new(tau, all, partition.k());
            market.clear(partition, opts.max_rounds)?;
            market.into_state(tau)
        }
        PriceRule::MarginalBid { unit } => marginal_bid(tau, partition, unit, opts.max_rounds)?,
    };
    let eps = state.graph.epsilon(valuation.n_items());
    Ok((Assignment::from_epsilon(valuation, eps), state))
}

/// Tight-edge tolerance scaled to the magnitude of the valuations.
fn tolerance(tau: &ValueTable, items: &[usize]) -> f64 {
    let scale = items
        .iter()
        .flat_map(|&m| tau.row(m).iter())
        .fold(1.0f64, |acc, v| acc.max(v.abs()));
    scale * 1e-12
}

/// Market over a pool of items with unit-capacity sellers and multi-unit level buyers.
/// Level 0 is the "not cached" buyer: it values every item at 0 and absorbs the items
/// no other level takes, so every item ends up matched.
///
/// Once every item is matched along a tight edge the prices clear the market, whatever
/// prices the search started from. A market can therefore be reused for the next
/// partition: it keeps its prices and matching and only repairs the levels whose
/// capacity changed.
struct Market {
    items: Vec<usize>,
    k: usize,
    /// Row-major `items x (K + 1)` valuations with a zero level-0 column.
    values: Vec<f64>,
    capacity: Vec<usize>,
    load: Vec<usize>,
    prices: Vec<f64>,
    matched: Vec<usize>,
    /// Highest payoff per level.
    best: Vec<f64>,
    tol: f64,
    rounds: usize,
}

const UNMATCHED: usize = usize::MAX;

impl Market {
    fn new(tau: &ValueTable, items: Vec<usize>, k: usize) -> Self {
        let mut values = Vec::with_capacity(items.len() * (k + 1));
        for &m in &items {
            values.push(0.0);
            values.extend_from_slice(&tau.row(m)[1..=k]);
        }
        let tol = tolerance(tau, &items);
        let n = items.len();
        Market {
            items,
            k,
            values,
            capacity: vec![0; k + 1],
            load: vec![0; k + 1],
            prices: vec![0.0; n],
            matched: vec![UNMATCHED; n],
            best: vec![f64::NEG_INFINITY; k + 1],
            tol,
            rounds: 0,
        }
    }

    #[inline]
    fn payoff(&self, i: usize, level: usize) -> f64 {
        self.values[i * (self.k + 1) + level] - self.prices[i]
    }

    #[inline]
    fn tight(&self, i: usize, level: usize) -> bool {
        self.payoff(i, level) >= self.best[level] - self.tol
    }

    fn refresh_best(&mut self) {
        self.best.iter_mut().for_each(|b| *b = f64::NEG_INFINITY);
        let stride = self.k + 1;
        for (i, row) in self.values.chunks_exact(stride).enumerate() {
            let p = self.prices[i];
            for (b, v) in self.best.iter_mut().zip(row) {
                *b = b.max(v - p);
            }
        }
    }

    fn clear(&mut self, partition: &CachePartition, max_rounds: Option<usize>) -> Result<()> {
        let n = self.items.len();
        debug_assert!(partition.items() <= n);
        for level in 1..=self.k {
            self.capacity[level] = partition.count(level);
        }
        self.capacity[0] = n - partition.items();
        self.rounds = 0;
        let budget = max_rounds.unwrap_or(4 * (n + 1) * (self.k + 2));
        let floor = self.prices.iter().cloned().fold(f64::INFINITY, f64::min);
        if floor.is_finite() && floor != 0.0 {
            self.prices.iter_mut().for_each(|p| *p -= floor);
        }
        self.refresh_best();
        // Levels that shrank release their lowest-payoff items.
        for level in 0..=self.k {
            while self.load[level] > self.capacity[level] {
                let worst = (0..n)
                    .filter(|&i| self.matched[i] == level)
                    .min_by(|&a, &b| self.payoff(a, level).total_cmp(&self.payoff(b, level)).then(b.cmp(&a)))
                    .expect("load counts matched items");
                self.matched[worst] = UNMATCHED;
                self.load[level] -= 1;
            }
        }
        // Free preferred sellers first come first served.
        for level in (1..=self.k).chain(std::iter::once(0)) {
            for i in 0..n {
                if self.load[level] == self.capacity[level] {
                    break;
                }
                if self.matched[i] == UNMATCHED && self.tight(i, level) {
                    self.matched[i] = level;
                    self.load[level] += 1;
                }
            }
        }
        for level in 0..=self.k {
            while self.load[level] < self.capacity[level] {
                self.augment(level, budget, partition)?;
            }
        }
        Ok(())
    }

    fn epsilon_into(&self, eps: &mut [usize]) {
        eps.iter_mut().for_each(|e| *e = 0);
        for (i, &m) in self.items.iter().enumerate() {
            eps[m] = self.matched[i];
        }
    }

    /// Grows the matching by one unit for `start`, raising the prices of constricted
    /// sets until an alternating path to an unmatched item exists.
    fn augment(&mut self, start: usize, budget: usize, partition: &CachePartition) -> Result<()> {
        let n = self.items.len();
        let mut in_s = vec![false; self.k + 1];
        let mut in_t = vec![false; n];
        // Level each reached item was reached from.
        let mut via_level = vec![UNMATCHED; n];
        // Item through which each level joined the search.
        let mut entry = vec![UNMATCHED; self.k + 1];
        let mut queue = VecDeque::new();
        in_s[start] = true;
        queue.push_back(start);
        loop {
            while let Some(level) = queue.pop_front() {
                for i in 0..n {
                    if in_t[i] || !self.tight(i, level) {
                        continue;
                    }
                    in_t[i] = true;
                    via_level[i] = level;
                    let owner = self.matched[i];
                    if owner == UNMATCHED {
                        self.flip_path(i, &via_level, &entry, start);
                        return Ok(());
                    }
                    if !in_s[owner] {
                        in_s[owner] = true;
                        entry[owner] = i;
                        queue.push_back(owner);
                    }
                }
            }
            // Constricted: levels in S only want items in T, all of them taken.
            self.rounds += 1;
            if self.rounds > budget {
                return Err(Error::NonTermination {
                    rounds: budget,
                    partition: partition.counts().to_vec(),
                });
            }
            let mut delta = f64::INFINITY;
            for level in (0..=self.k).filter(|&l| in_s[l]) {
                for i in (0..n).filter(|&i| !in_t[i]) {
                    delta = delta.min(self.best[level] - self.payoff(i, level));
                }
            }
            debug_assert!(delta.is_finite() && delta > 0.0);
            for i in (0..n).filter(|&i| in_t[i]) {
                self.prices[i] += delta;
            }
            self.refresh_best();
            for level in (0..=self.k).filter(|&l| in_s[l]) {
                queue.push_back(level);
            }
        }
    }

    /// Moves every item on the alternating path ending at `last` to the level it was
    /// reached from.
    fn flip_path(&mut self, last: usize, via_level: &[usize], entry: &[usize], start: usize) {
        let mut i = last;
        loop {
            let to = via_level[i];
            let from = self.matched[i];
            self.matched[i] = to;
            self.load[to] += 1;
            if from != UNMATCHED {
                self.load[from] -= 1;
            }
            if to == start {
                return;
            }
            i = entry[to];
        }
    }

    fn into_state(self, tau: &ValueTable) -> AuctionState {
        let mut levels: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut prices = vec![0.0; tau.rows()];
        let mut payoff = tau.clone();
        for (i, &m) in self.items.iter().enumerate() {
            prices[m] = self.prices[i];
            for v in payoff.row_mut(m) {
                *v -= self.prices[i];
            }
            if self.matched[i] != 0 && self.matched[i] != UNMATCHED {
                levels.entry(self.matched[i]).or_default().push(m);
            }
        }
        for (level, items) in levels.iter_mut() {
            items.sort_by(|a, b| payoff.get(*b, *level).total_cmp(&payoff.get(*a, *level)).then(a.cmp(b)));
        }
        let graph = PreferredSellerGraph { levels };
        let constricted = constricted_set(&graph);
        AuctionState {
            prices,
            payoff,
            graph,
            constricted,
            rounds: self.rounds,
        }
    }
}

/// `sum_top(column, x)`: sum of the `x` largest entries, optionally skipping one row.
fn sum_top(payoff: &ValueTable, col: usize, x: usize, skip: Option<usize>) -> f64 {
    let mut vals: Vec<f64> = (0..payoff.rows())
        .filter(|&m| Some(m) != skip)
        .map(|m| payoff.get(m, col))
        .collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    vals.iter().take(x).sum()
}

fn marginal_bid(
    tau: &ValueTable,
    partition: &CachePartition,
    unit: f64,
    max_rounds: Option<usize>,
) -> Result<AuctionState> {
    let n = tau.rows();
    let budget = max_rounds.unwrap_or(n * (partition.k() + 2));
    let mut prices = vec![0.0; n];
    let mut payoff = tau.clone();
    let mut graph = preferred_seller_graph(&payoff, partition);
    let mut constricted = constricted_set(&graph);
    let mut rounds = 0;
    while !constricted.is_empty() {
        rounds += 1;
        if rounds > budget {
            return Err(Error::NonTermination {
                rounds: budget,
                partition: partition.counts().to_vec(),
            });
        }
        for &m in &constricted.items {
            let mut gain = 0.0f64;
            for &k in &constricted.levels {
                let x = partition.count(k);
                let with = sum_top(&payoff, k, x, None);
                let without = sum_top(&payoff, k, x, Some(m));
                gain = gain.max((with - without).max(0.0));
            }
            prices[m] += unit.max(gain);
            for (j, v) in payoff.row_mut(m).iter_mut().enumerate() {
                *v = tau.get(m, j) - prices[m];
            }
        }
        graph = preferred_seller_graph(&payoff, partition);
        constricted = constricted_set(&graph);
    }
    Ok(AuctionState {
        prices,
        payoff,
        graph,
        constricted,
        rounds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveOptions {
    pub clearing: ClearingOptions,
    /// Refuse instances whose partition count bound exceeds this value.
    pub partition_limit: Option<u128>,
}

/// Result of [`optimal_offline`].
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineSolution {
    pub assignment: Assignment,
    /// The partition the assignment came from; `None` when no partition exists.
    pub partition: Option<CachePartition>,
    pub partitions_examined: usize,
}

/// Per-column item ranking shared by every partition of one solve.
struct ColumnRanks {
    ranks: Vec<Vec<usize>>,
}

impl ColumnRanks {
    fn new(tau: &ValueTable, depth: usize) -> Self {
        let ranks = (0..tau.cols())
            .map(|col| if col == 0 { Vec::new() } else { top_items(tau, col, depth) })
            .collect();
        ColumnRanks { ranks }
    }

    /// Items that can appear in some optimal assignment of any partition with at most
    /// `depth` items: the union of every column's top `depth`. An item placed at level
    /// `k` outside that set can always be swapped for an uncached item inside it.
    fn pool(&self, n_items: usize) -> Vec<usize> {
        let mut mark = vec![false; n_items];
        for rank in &self.ranks {
            for &m in rank {
                mark[m] = true;
            }
        }
        (0..n_items).filter(|&m| mark[m]).collect()
    }
}

/// Clears partitions in order, reusing one market across them.
struct BatchSolver<'a> {
    valuation: &'a ValuationArray,
    ranks: &'a ColumnRanks,
    opts: &'a ClearingOptions,
    market: Option<Market>,
    eps: Vec<usize>,
}

impl<'a> BatchSolver<'a> {
    fn new(valuation: &'a ValuationArray, ranks: &'a ColumnRanks, opts: &'a ClearingOptions) -> Self {
        BatchSolver {
            valuation,
            ranks,
            opts,
            market: None,
            eps: vec![0; valuation.n_items()],
        }
    }

    /// Objective of the best assignment for `partition`; the assignment is left in
    /// `self.eps`.
    fn solve(&mut self, partition: &CachePartition) -> Result<f64> {
        if let PriceRule::MarginalBid { .. } = self.opts.rule {
            let a = clear_market(self.valuation, partition, self.opts)?;
            self.eps = a.epsilon;
            return Ok(a.objective);
        }
        // Uncontested preferred sellers at zero prices are already optimal.
        self.eps.iter_mut().for_each(|e| *e = 0);
        let mut contested = false;
        'levels: for k in (1..=partition.k()).filter(|&k| partition.count(k) > 0) {
            for &m in &self.ranks.ranks[k][..partition.count(k)] {
                if self.eps[m] != 0 {
                    contested = true;
                    break 'levels;
                }
                self.eps[m] = k;
            }
        }
        if contested {
            let market = self.market.get_or_insert_with(|| {
                Market::new(
                    self.valuation.table(),
                    self.ranks.pool(self.valuation.n_items()),
                    self.valuation.k(),
                )
            });
            market.clear(partition, self.opts.max_rounds)?;
            market.epsilon_into(&mut self.eps);
        }
        Ok(self.valuation.objective(&self.eps))
    }
}

/// Runs the market for every feasible partition of `capacity` and keeps the assignment
/// with the largest objective (the first one in enumeration order on ties).
pub fn optimal_offline(
    valuation: &ValuationArray,
    capacity: usize,
    opts: &SolveOptions,
) -> Result<OfflineSolution> {
    let n = valuation.n_items();
    let k = valuation.k();
    if k == 0 {
        return Err(Error::domain("valuation has no data chunks"));
    }
    if let Some(limit) = opts.partition_limit {
        let bound = partition_count_bound(capacity, k);
        if bound > limit {
            return Err(Error::TooLarge { bound, limit });
        }
    }
    let ranks = ColumnRanks::new(valuation.table(), capacity.min(n));
    let mut best: Option<Candidate> = None;
    let mut examined = 0;
    let mut partitions = enumerate_partitions(capacity, k, n).peekable();
    // Batches are fixed-size so the result does not depend on the thread count.
    const BATCH: usize = 2048;
    const ROUND: usize = 16;
    while partitions.peek().is_some() {
        let mut batches: Vec<Vec<(usize, CachePartition)>> = Vec::with_capacity(ROUND);
        for _ in 0..ROUND {
            let batch: Vec<_> = partitions
                .by_ref()
                .take(BATCH)
                .enumerate()
                .map(|(i, p)| (examined + i, p))
                .collect();
            if batch.is_empty() {
                break;
            }
            examined += batch.len();
            batches.push(batch);
        }
        let winners = batches
            .into_par_iter()
            .map(|batch| {
                let mut solver = BatchSolver::new(valuation, &ranks, &opts.clearing);
                let mut local: Option<Candidate> = None;
                for (idx, p) in batch {
                    let objective = solver.solve(&p)?;
                    if local.as_ref().is_none_or(|c| objective > c.objective) {
                        local = Some(Candidate {
                            index: idx,
                            objective,
                            epsilon: solver.eps.clone(),
                            partition: p,
                        });
                    }
                }
                Ok(local)
            })
            .collect::<Result<Vec<_>>>()?;
        for w in winners.into_iter().flatten() {
            if best.as_ref().is_none_or(|b| better(&w, b)) {
                best = Some(w);
            }
        }
    }
    Ok(match best {
        Some(c) => OfflineSolution {
            assignment: Assignment {
                epsilon: c.epsilon,
                objective: c.objective,
            },
            partition: Some(c.partition),
            partitions_examined: examined,
        },
        None => OfflineSolution {
            assignment: Assignment::empty(n),
            partition: None,
            partitions_examined: 0,
        },
    })
}

struct Candidate {
    index: usize,
    objective: f64,
    epsilon: Vec<usize>,
    partition: CachePartition,
}

/// Higher objective wins; equal objectives go to the earlier partition.
fn better(a: &Candidate, b: &Candidate) -> bool {
    a.objective > b.objective || (a.objective == b.objective && a.index < b.index)
}

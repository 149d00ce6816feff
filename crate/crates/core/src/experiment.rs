//! Scenario files, policy comparisons, per-request logs and parameter sweeps.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! version = 1
//! seed = 42
//!
//! [system]
//! n_items = 1000
//! capacity = 100
//!
//! [latency]
//! profile = "victoria"      # or node_ms = [..]
//! jitter_std_frac = 0.1
//!
//! [workload]
//! n_requests = 50000
//! popularity = "zipf"       # or "uniform"
//! tail_index = 2.0
//!
//! [failure]
//! server = [0, 1]           # node, server; omit for no failure
//!
//! [policy]
//! policies = ["backend", "lru", "lfu", "agar", "optimal", "online"]
//! ```
//!
//! Every section and key is optional and falls back to the defaults shown by
//! [`Scenario::default`]. Unknown keys are rejected.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{optimal_offline, ClearingOptions, PriceRule, SolveOptions};
use crate::baselines::{AgarPolicy, LfuPolicy, LruPolicy, PolicyKind};
use crate::error::{Error, Result};
use crate::model::{
    build_valuation, CacheState, ChunkLatency, LatencyProfile, PlacementMap, ServerLoc, SystemConfig,
    ValuationArray,
};
use crate::online::{DreCounter, EwmaLatency, OnlineConfig, OnlineEngine};
use crate::partition::partition_count_bound;
use crate::sim::{
    generate_placement, generate_trace, serve_request, swap_in_recovered, FailureScenario, LatencyModel,
    Popularity, Trace, WorkloadSpec, DEFAULT_DECODE_MS,
};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencySection {
    /// Preset name: `victoria`, `san_francisco` or `toronto`.
    pub profile: String,
    /// Explicit per-node means; overrides `profile`.
    pub node_ms: Option<Vec<f64>>,
    pub jitter_std_frac: f64,
    pub trunc_sigma: f64,
    pub floor_ms: f64,
}

impl Default for LatencySection {
    fn default() -> Self {
        LatencySection {
            profile: "victoria".into(),
            node_ms: None,
            jitter_std_frac: 0.1,
            trunc_sigma: 3.0,
            floor_ms: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopularityKind {
    Zipf,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSection {
    pub n_requests: usize,
    pub popularity: PopularityKind,
    pub tail_index: f64,
    pub duration_ms: f64,
}

impl Default for WorkloadSection {
    fn default() -> Self {
        WorkloadSection {
            n_requests: 50_000,
            popularity: PopularityKind::Zipf,
            tail_index: 2.0,
            duration_ms: 3_600_000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FailureSection {
    /// `[node, server]` of the failed server.
    pub server: Option<[usize; 2]>,
    pub decode_latency_ms: f64,
}

impl Default for FailureSection {
    fn default() -> Self {
        FailureSection {
            server: None,
            decode_latency_ms: DEFAULT_DECODE_MS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceRuleKind {
    MinimalRaise,
    MarginalBid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub policies: Vec<PolicyKind>,
    /// Requests between Agar-style reconfigurations.
    pub agar_interval: usize,
    pub decay_ratio: f64,
    pub decay_period_ms: f64,
    pub alpha: f64,
    /// Refuse the offline optimum when the partition count bound exceeds this; 0 disables.
    pub optimal_partition_limit: u64,
    pub price_rule: PriceRuleKind,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            policies: PolicyKind::ALL.to_vec(),
            agar_interval: 100,
            decay_ratio: 0.5,
            decay_period_ms: 10_000.0,
            alpha: 0.8,
            optimal_partition_limit: 1_000_000,
            price_rule: PriceRuleKind::MinimalRaise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub seed: u64,
    pub system: SystemConfig,
    pub latency: LatencySection,
    pub workload: WorkloadSection,
    pub failure: FailureSection,
    pub policy: PolicySection,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            version: SCENARIO_VERSION,
            seed: 1,
            system: SystemConfig::default(),
            latency: LatencySection::default(),
            workload: WorkloadSection::default(),
            failure: FailureSection::default(),
            policy: PolicySection::default(),
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| {
            let line = e.span().map_or(0, |r| text[..r.start].matches('\n').count() + 1);
            Error::parse(line, e.message())
        })?;
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let key = if key == "." { "scenario".to_string() } else { key };
            Error::config(key, e.inner().message())
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCENARIO_VERSION {
            return Err(Error::config(
                "version",
                format!("unsupported scenario version {} (expected {SCENARIO_VERSION})", self.version),
            ));
        }
        self.system.validate()?;
        let profile = self.profile()?;
        if profile.n_nodes() < self.system.n_nodes {
            return Err(Error::config(
                "latency.node_ms",
                format!("{} node latencies for {} nodes", profile.n_nodes(), self.system.n_nodes),
            ));
        }
        self.latency_model(&profile)?;
        let w = &self.workload;
        if !(w.tail_index.is_finite() && w.tail_index >= 0.0) {
            return Err(Error::config("workload.tail_index", "must be nonnegative"));
        }
        if !(w.duration_ms.is_finite() && w.duration_ms > 0.0) {
            return Err(Error::config("workload.duration_ms", "must be positive"));
        }
        if let Some([node, server]) = self.failure.server {
            if node >= self.system.n_nodes || server >= self.system.servers_per_node {
                return Err(Error::config("failure.server", format!("no server [{node}, {server}]")));
            }
        }
        if !(self.failure.decode_latency_ms.is_finite() && self.failure.decode_latency_ms >= 0.0) {
            return Err(Error::config("failure.decode_latency_ms", "must be nonnegative"));
        }
        let p = &self.policy;
        if p.policies.is_empty() {
            return Err(Error::config("policy.policies", "lists no policy"));
        }
        if p.agar_interval == 0 {
            return Err(Error::config("policy.agar_interval", "must be at least 1"));
        }
        DreCounter::new(0, p.decay_ratio, p.decay_period_ms).map_err(rekey("policy"))?;
        EwmaLatency::new(0, p.alpha).map_err(rekey("policy"))?;
        Ok(())
    }

    pub fn profile(&self) -> Result<LatencyProfile> {
        match &self.latency.node_ms {
            Some(ms) => LatencyProfile::new(ms.clone()).map_err(|e| Error::config("latency.node_ms", e.to_string())),
            None => LatencyProfile::preset(&self.latency.profile).ok_or_else(|| {
                Error::config("latency.profile", format!("unknown profile `{}`", self.latency.profile))
            }),
        }
    }

    fn latency_model(&self, profile: &LatencyProfile) -> Result<LatencyModel> {
        let l = &self.latency;
        LatencyModel::new(profile, l.jitter_std_frac, l.trunc_sigma, l.floor_ms, self.seeds().jitter)
    }

    /// Independent seeds for placement, trace and jitter derived from `seed`.
    pub fn seeds(&self) -> Seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Seeds {
            placement: rng.random(),
            trace: rng.random(),
            jitter: rng.random(),
        }
    }

    pub fn workload_spec(&self) -> WorkloadSpec {
        let w = &self.workload;
        WorkloadSpec {
            n_requests: w.n_requests,
            popularity: match w.popularity {
                PopularityKind::Zipf => Popularity::Zipf { tail_index: w.tail_index },
                PopularityKind::Uniform => Popularity::Uniform,
            },
            duration_ms: w.duration_ms,
            seed: self.seeds().trace,
        }
    }

    pub fn failure_scenario(&self) -> FailureScenario {
        FailureScenario {
            failed_server: self.failure.server.map(|[n, s]| ServerLoc::new(n, s)),
            decode_latency_ms: self.failure.decode_latency_ms,
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            clearing: ClearingOptions {
                rule: match self.policy.price_rule {
                    PriceRuleKind::MinimalRaise => PriceRule::MinimalRaise,
                    PriceRuleKind::MarginalBid => PriceRule::MarginalBid { unit: 1.0 },
                },
                max_rounds: None,
            },
            partition_limit: None,
        }
    }

    /// Placement, trace and latency model shared by every policy of a run.
    pub fn build(&self) -> Result<World> {
        self.validate()?;
        let profile = self.profile()?;
        Ok(World {
            placement: generate_placement(&self.system, self.seeds().placement)?,
            trace: generate_trace(&self.workload_spec(), self.system.n_items)?,
            model: self.latency_model(&profile)?,
            failure: self.failure_scenario(),
        })
    }
}

fn rekey(section: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Config { key, reason } => {
            let leaf = key.rsplit('.').next().unwrap_or(&key).to_string();
            Error::config(format!("{section}.{leaf}"), reason)
        }
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub placement: u64,
    pub trace: u64,
    pub jitter: u64,
}

#[derive(Debug, Clone)]
pub struct World {
    pub placement: PlacementMap,
    pub trace: Trace,
    pub model: LatencyModel,
    pub failure: FailureScenario,
}

/// One served request.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestRecord {
    pub request: usize,
    pub time_ms: f64,
    pub item: usize,
    pub latency_ms: f64,
    pub hit_chunks: usize,
    pub degraded: bool,
    pub decode_ms: f64,
    pub eps_after: usize,
    pub evicted: usize,
    pub partitions_examined: usize,
    /// Wall-clock decision time; not part of the reproducible log.
    pub decision_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyReport {
    pub policy: PolicyKind,
    pub requests: usize,
    pub avg_latency_ms: f64,
    pub p95_latency_ms: f64,
    /// Requested data chunks served from the cache.
    pub hit_ratio: f64,
    pub avg_decode_ms: f64,
    pub avg_decision_ms: f64,
    pub partitions_examined: u64,
    pub max_partitions_examined: usize,
}

/// Summary statistics of one policy's log.
pub fn summarize(policy: PolicyKind, k: usize, records: &[RequestRecord]) -> PolicyReport {
    let n = records.len();
    let mean = |f: &dyn Fn(&RequestRecord) -> f64| {
        if n == 0 {
            0.0
        } else {
            records.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let mut lat: Vec<f64> = records.iter().map(|r| r.latency_ms).collect();
    lat.sort_by(f64::total_cmp);
    let p95 = if n == 0 {
        0.0
    } else {
        lat[(n * 95).div_ceil(100).max(1) - 1]
    };
    let hits: usize = records.iter().map(|r| r.hit_chunks).sum();
    PolicyReport {
        policy,
        requests: n,
        avg_latency_ms: mean(&|r| r.latency_ms),
        p95_latency_ms: p95,
        hit_ratio: if n == 0 { 0.0 } else { hits as f64 / (n * k) as f64 },
        avg_decode_ms: mean(&|r| r.decode_ms),
        avg_decision_ms: mean(&|r| r.decision_ms),
        partitions_examined: records.iter().map(|r| r.partitions_examined as u64).sum(),
        max_partitions_examined: records.iter().map(|r| r.partitions_examined).max().unwrap_or(0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub policies: Vec<PolicyReport>,
}

impl RunReport {
    pub fn get(&self, policy: PolicyKind) -> Option<&PolicyReport> {
        self.policies.iter().find(|p| p.policy == policy)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        for p in &self.policies {
            let _ = writeln!(s, "{}", report_row(p));
        }
        s
    }
}

const REPORT_HEADER: &str = "policy,requests,avg_latency_ms,p95_latency_ms,hit_ratio,avg_decode_ms,avg_decision_ms,partitions_examined,max_partitions_examined";

fn report_row(p: &PolicyReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        p.policy,
        p.requests,
        p.avg_latency_ms,
        p.p95_latency_ms,
        p.hit_ratio,
        p.avg_decode_ms,
        p.avg_decision_ms,
        p.partitions_examined,
        p.max_partitions_examined
    )
}

/// Every policy's log for one scenario.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub k: usize,
    pub logs: Vec<(PolicyKind, Vec<RequestRecord>)>,
}

pub const LOG_HEADER: &str =
    "policy,request,time_ms,item,latency_ms,hit_chunks,degraded,decode_ms,eps_after,evicted,partitions_examined";

impl Experiment {
    pub fn report(&self) -> RunReport {
        RunReport {
            policies: self.logs.iter().map(|(p, r)| summarize(*p, self.k, r)).collect(),
        }
    }

    /// Per-request log. With `timing` a trailing `decision_ms` column is added; that
    /// column is wall-clock and differs between runs.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut s = String::from(LOG_HEADER);
        s.push_str(if timing { ",decision_ms\n" } else { "\n" });
        for (policy, records) in &self.logs {
            for r in records {
                let _ = write!(
                    s,
                    "{policy},{},{},{},{},{},{},{},{},{},{}",
                    r.request,
                    r.time_ms,
                    r.item,
                    r.latency_ms,
                    r.hit_chunks,
                    u8::from(r.degraded),
                    r.decode_ms,
                    r.eps_after,
                    r.evicted,
                    r.partitions_examined
                );
                if timing {
                    let _ = write!(s, ",{}", r.decision_ms);
                }
                s.push('\n');
            }
        }
        s
    }
}

/// Parses a log written by [`Experiment::to_csv`].
pub fn read_log(text: &str) -> Result<Vec<(PolicyKind, Vec<RequestRecord>)>> {
    let mut lines = text.lines().enumerate();
    let (_, head) = lines.next().ok_or_else(|| Error::parse(1, "empty log"))?;
    let timing = match head.strip_prefix(LOG_HEADER) {
        Some("") => false,
        Some(",decision_ms") => true,
        _ => return Err(Error::parse(1, "unexpected header")),
    };
    let mut out: Vec<(PolicyKind, Vec<RequestRecord>)> = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 + usize::from(timing) {
            return Err(Error::parse(line_no, format!("expected {} columns", 11 + usize::from(timing))));
        }
        fn num<T: std::str::FromStr>(line: usize, raw: &str) -> Result<T> {
            raw.parse().map_err(|_| Error::parse(line, format!("bad value `{raw}`")))
        }
        let policy: PolicyKind = f[0].parse().map_err(|_| Error::parse(line_no, format!("bad policy `{}`", f[0])))?;
        let record = RequestRecord {
            request: num(line_no, f[1])?,
            time_ms: num(line_no, f[2])?,
            item: num(line_no, f[3])?,
            latency_ms: num(line_no, f[4])?,
            hit_chunks: num(line_no, f[5])?,
            degraded: num::<u8>(line_no, f[6])? != 0,
            decode_ms: num(line_no, f[7])?,
            eps_after: num(line_no, f[8])?,
            evicted: num(line_no, f[9])?,
            partitions_examined: num(line_no, f[10])?,
            decision_ms: if timing { num(line_no, f[11])? } else { 0.0 },
        };
        match out.last_mut() {
            Some((p, records)) if *p == policy => records.push(record),
            _ => out.push((policy, vec![record])),
        }
    }
    Ok(out)
}

/// Valuation the offline optimum plans with: whole-trace request rates and mean node
/// latencies, with a failed data chunk costing its cheapest parity stand-in plus decoding.
pub fn planning_valuation(world: &World, span_ms: f64) -> Result<ValuationArray> {
    let p = &world.placement;
    let n = p.n_items();
    let secs = (span_ms / 1000.0).max(f64::MIN_POSITIVE);
    let rates: Vec<f64> = world.trace.counts(n).iter().map(|&c| c as f64 / secs).collect();
    let failure = &world.failure;
    if failure.failed_server.is_none() {
        let means = LatencyProfile::new((0..world.model.n_nodes()).map(|i| world.model.base(i)).collect())?;
        return build_valuation(p, &means, &rates);
    }
    ValuationArray::from_chunk_latencies(n, p.k_data(), &rates, |m| {
        let spare = p
            .parity_locs(m)
            .iter()
            .filter(|l| !failure.is_failed(**l))
            .map(|l| world.model.base(l.node))
            .fold(f64::INFINITY, f64::min);
        Ok(p.data_locs(m)
            .iter()
            .enumerate()
            .map(|(index, &loc)| ChunkLatency {
                index,
                node: loc.node,
                latency: if failure.is_failed(loc) {
                    spare + failure.decode_latency_ms
                } else {
                    world.model.base(loc.node)
                },
            })
            .collect())
    })
}

enum Runtime {
    Backend(CacheState),
    Lru(LruPolicy),
    Lfu(LfuPolicy),
    Agar(Box<AgarPolicy>),
    Static(CacheState),
    Online(Box<OnlineEngine>),
}

impl Runtime {
    fn cache(&self) -> &CacheState {
        match self {
            Runtime::Backend(c) | Runtime::Static(c) => c,
            Runtime::Lru(p) => p.cache(),
            Runtime::Lfu(p) => p.cache(),
            Runtime::Agar(p) => p.cache(),
            Runtime::Online(e) => e.cache(),
        }
    }

    fn cache_mut(&mut self) -> &mut CacheState {
        match self {
            Runtime::Backend(c) | Runtime::Static(c) => c,
            Runtime::Lru(p) => p.cache_mut(),
            Runtime::Lfu(p) => p.cache_mut(),
            Runtime::Agar(p) => p.cache_mut(),
            Runtime::Online(e) => e.cache_mut(),
        }
    }
}

/// Offline optimum installed once for the whole trace.
pub fn optimal_configuration(scenario: &Scenario, world: &World, allow_large: bool) -> Result<CacheState> {
    let sys = &scenario.system;
    let limit = scenario.policy.optimal_partition_limit;
    if !allow_large && limit > 0 {
        let bound = partition_count_bound(sys.capacity, sys.k_data);
        if bound > u128::from(limit) {
            return Err(Error::TooLarge {
                bound,
                limit: u128::from(limit),
            });
        }
    }
    let valuation = planning_valuation(world, scenario.workload.duration_ms)?;
    let solution = optimal_offline(&valuation, sys.capacity, &scenario.solve_options())?;
    let mut cache = CacheState::new(sys.n_items, sys.k_data, sys.capacity);
    for (m, &e) in solution.assignment.epsilon.iter().enumerate() {
        if e > 0 {
            cache.set_level(m, e, &valuation)?;
        }
    }
    Ok(cache)
}

fn runtime(scenario: &Scenario, world: &World, policy: PolicyKind, allow_large: bool) -> Result<Runtime> {
    let sys = &scenario.system;
    let p = &scenario.policy;
    let (n, k, c) = (sys.n_items, sys.k_data, sys.capacity);
    let dre = || DreCounter::new(n, p.decay_ratio, p.decay_period_ms);
    let ewma = || EwmaLatency::new(sys.n_nodes, p.alpha);
    Ok(match policy {
        PolicyKind::Backend => Runtime::Backend(CacheState::new(n, k, 0)),
        PolicyKind::Lru => Runtime::Lru(LruPolicy::new(n, k, c)),
        PolicyKind::Lfu => Runtime::Lfu(LfuPolicy::new(n, k, c, dre()?)),
        PolicyKind::Agar => Runtime::Agar(Box::new(AgarPolicy::new(&world.placement, c, p.agar_interval, dre()?, ewma()?)?)),
        PolicyKind::Optimal => Runtime::Static(optimal_configuration(scenario, world, allow_large)?),
        PolicyKind::Online => {
            let mut cfg = OnlineConfig::new(c);
            cfg.decay_ratio = p.decay_ratio;
            cfg.decay_period_ms = p.decay_period_ms;
            cfg.alpha = p.alpha;
            cfg.solve = scenario.solve_options();
            Runtime::Online(Box::new(OnlineEngine::new(&world.placement, sys.n_nodes, &cfg)?))
        }
    })
}

/// Replays the trace against one policy.
pub fn simulate(
    scenario: &Scenario,
    world: &World,
    samples: &[Vec<f64>],
    policy: PolicyKind,
    allow_large: bool,
) -> Result<Vec<RequestRecord>> {
    let spn = scenario.system.servers_per_node;
    let mut rt = runtime(scenario, world, policy, allow_large)?;
    let mut out = Vec::with_capacity(world.trace.len());
    for (i, (&time_ms, &item)) in world.trace.times_ms.iter().zip(&world.trace.items).enumerate() {
        let outcome = serve_request(&world.placement, spn, &samples[i], rt.cache(), &world.failure, item)?;
        let node_samples = outcome.node_samples();
        let started = Instant::now();
        let mut evicted = 0;
        let mut partitions = 0;
        match &mut rt {
            Runtime::Backend(_) | Runtime::Static(_) => {}
            Runtime::Lru(p) => evicted = p.on_request(item)?.len(),
            Runtime::Lfu(p) => evicted = p.on_request(item, time_ms)?.len(),
            Runtime::Agar(p) => {
                note_recovered(&outcome, &world.failure, |c, node, d| p.note_recovered(item, c, node, d));
                p.on_request(item, time_ms, &node_samples)?;
            }
            Runtime::Online(e) => {
                note_recovered(&outcome, &world.failure, |c, node, d| e.note_recovered(item, c, node, d));
                e.record_request(item, time_ms, &node_samples)?;
                let d = e.on_request(item)?;
                evicted = d.evicted.len();
                partitions = d.partitions_examined;
            }
        }
        if outcome.degraded && !matches!(rt, Runtime::Backend(_)) {
            for &chunk in &outcome.recovered {
                swap_in_recovered(rt.cache_mut(), &world.placement, &world.model, item, chunk)?;
            }
        }
        let decision_ms = started.elapsed().as_secs_f64() * 1000.0;
        out.push(RequestRecord {
            request: i,
            time_ms,
            item,
            latency_ms: outcome.latency_ms,
            hit_chunks: outcome.hit_chunks,
            degraded: outcome.degraded,
            decode_ms: outcome.decode_ms,
            eps_after: rt.cache().epsilon(item),
            evicted,
            partitions_examined: partitions,
            decision_ms,
        });
    }
    Ok(out)
}

/// Passes each rebuilt chunk with the parity node that stood in for it.
fn note_recovered(outcome: &crate::sim::ServiceOutcome, failure: &FailureScenario, mut f: impl FnMut(usize, usize, f64)) {
    let spares = outcome.fetched.iter().filter(|x| x.parity);
    for (&chunk, spare) in outcome.recovered.iter().zip(spares) {
        f(chunk, spare.loc.node, failure.decode_latency_ms);
    }
}

/// Runs every requested policy on the same placement, trace and latency draws.
pub fn run_experiment(scenario: &Scenario, policies: &[PolicyKind], allow_large: bool) -> Result<Experiment> {
    let world = scenario.build()?;
    run_world(scenario, &world, policies, allow_large)
}

pub fn run_world(scenario: &Scenario, world: &World, policies: &[PolicyKind], allow_large: bool) -> Result<Experiment> {
    let spn = scenario.system.servers_per_node;
    let samples: Vec<Vec<f64>> = (0..world.trace.len() as u64)
        .into_par_iter()
        .map(|i| world.model.sample_servers(i, spn))
        .collect();
    let logs = policies
        .par_iter()
        .map(|&p| simulate(scenario, world, &samples, p, allow_large).map(|r| (p, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Experiment {
        k: scenario.system.k_data,
        logs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Capacity,
    K,
    Items,
    TailIndex,
    Failure,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "C" | "c" | "capacity" => SweepParam::Capacity,
            "K" | "k" => SweepParam::K,
            "M" | "m" | "items" => SweepParam::Items,
            "tail-index" | "tail_index" | "zipf" => SweepParam::TailIndex,
            "failure" => SweepParam::Failure,
            other => return Err(Error::config("sweep.parameter", format!("unknown parameter `{other}`"))),
        })
    }
}

impl SweepParam {
    /// Applies `value` to a copy of `base`. Failure values are `none` or `node:server`.
    pub fn apply(self, base: &Scenario, value: &str) -> Result<Scenario> {
        let mut s = base.clone();
        let bad = |key: &str| Error::config(key, format!("bad sweep value `{value}`"));
        match self {
            SweepParam::Capacity => s.system.capacity = value.parse().map_err(|_| bad("system.capacity"))?,
            SweepParam::K => s.system.k_data = value.parse().map_err(|_| bad("system.k_data"))?,
            SweepParam::Items => s.system.n_items = value.parse().map_err(|_| bad("system.n_items"))?,
            SweepParam::TailIndex => {
                s.workload.popularity = PopularityKind::Zipf;
                s.workload.tail_index = value.parse().map_err(|_| bad("workload.tail_index"))?;
            }
            SweepParam::Failure => {
                s.failure.server = match value {
                    "none" => None,
                    v => {
                        let (a, b) = v.split_once(':').ok_or_else(|| bad("failure.server"))?;
                        Some([a.parse().map_err(|_| bad("failure.server"))?, b.parse().map_err(|_| bad("failure.server"))?])
                    }
                }
            }
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub report: RunReport,
}

/// One run per value; points run in parallel.
pub fn sweep(
    base: &Scenario,
    param: SweepParam,
    values: &[String],
    policies: &[PolicyKind],
    allow_large: bool,
) -> Result<Vec<SweepRow>> {
    let scenarios = values.iter().map(|v| param.apply(base, v)).collect::<Result<Vec<_>>>()?;
    scenarios
        .par_iter()
        .zip(values)
        .map(|(s, v)| {
            run_experiment(s, policies, allow_large).map(|e| SweepRow {
                value: v.clone(),
                report: e.report(),
            })
        })
        .collect()
}

pub fn sweep_csv(param_name: &str, rows: &[SweepRow]) -> String {
    let mut s = format!("{param_name},{REPORT_HEADER}\n");
    for row in rows {
        for p in &row.report.policies {
            let _ = writeln!(s, "{},{}", row.value, report_row(p));
        }
    }
    s
}

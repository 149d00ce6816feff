//! Chunk-level caching for geo-distributed erasure-coded storage.
//!
//! A frontend caches individual data chunks of coded items. Caching the `e` slowest
//! chunks of an item cuts its read latency to that of the next slowest one, and the
//! value of doing so is the reduction weighted by the item's request rate. The crate
//! provides:
//!
//! - [`model`]: placements, latency profiles, valuation arrays, cache state
//! - [`partition`]: enumeration of cache partitions
//! - [`assignment`]: market clearing per partition and the offline optimum
//! - [`online`]: per-request decisions from live estimates
//! - [`baselines`]: LRU, LFU and an Agar-style greedy configurator
//! - [`sim`]: placement and workload generation, latency sampling, degraded reads
//! - [`experiment`]: scenario files, policy comparisons, sweeps
//! - [`io`]: text formats

pub mod assignment;
pub mod baselines;
pub mod error;
pub mod experiment;
pub mod io;
pub mod model;
pub mod online;
pub mod partition;
pub mod sim;

pub use assignment::{
    clear_market, constricted_set, optimal_offline, preferred_seller_graph, Assignment, ClearingOptions,
    OfflineSolution, PriceRule, SolveOptions,
};
pub use baselines::{agar_configure, PolicyKind};
pub use error::{Error, Result};
pub use experiment::{run_experiment, sweep, RunReport, Scenario, SweepParam};
pub use model::{
    build_valuation, CacheState, ChunkLatency, LatencyProfile, PlacementMap, ServerLoc, SystemConfig,
    ValuationArray, ValueTable,
};
pub use online::{DreCounter, EwmaLatency, OnlineConfig, OnlineEngine};
pub use partition::{enumerate_partitions, partition_count_bound, CachePartition};
pub use sim::{generate_placement, generate_trace, serve_request, FailureScenario, LatencyModel, WorkloadSpec};

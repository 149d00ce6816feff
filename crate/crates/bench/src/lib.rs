//! Fixtures shared by the benchmarks.

use geocache_core::experiment::{planning_valuation, Scenario, World};
use geocache_core::ValuationArray;

/// Default scenario with capacity `c` and the valuation the offline optimum would plan with.
pub fn desk(c: usize) -> (Scenario, World, ValuationArray) {
    let mut s = Scenario::default();
    s.system.capacity = c;
    let world = s.build().expect("default scenario is valid");
    let v = planning_valuation(&world, s.workload.duration_ms).expect("valuation");
    (s, world, v)
}

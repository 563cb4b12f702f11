//! Shared inputs for the benchmarks in `benches/`.

use gvcplm::sim::scenario::{gen_scenario, ScenarioSpec};
use gvcplm::Dataset;

/// The Poisson design with its first `d` parametric covariates.
pub fn poisson_design(d: usize, seed: u64) -> (ScenarioSpec, Dataset) {
    let spec = ScenarioSpec {
        seed,
        ..ScenarioSpec::example41().truncate_d(d)
    };
    let data = gen_scenario(&spec).expect("preset design is valid");
    (spec, data)
}

//! Inputs shared by the benchmarks.

use crossing_core::calibrate::TrialRecord;
use crossing_core::cue::units::mph_to_mps;
use crossing_core::data::{synth_dataset, Design};
use crossing_core::params::fixtures;
use crossing_core::sim::ScenarioConfig;

/// Trials from random gap sequences under the flow-rule model.
pub fn flow_trials(n: usize, seed: u64) -> Vec<TrialRecord> {
    synth_dataset(&fixtures::flow_sw(), &Design::random_flow(), n, seed).expect("valid fixture")
}

/// The first traffic-flow scenario with `agents` pedestrians.
pub fn scenario_one(agents: usize) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(
        fixtures::SCENARIO_ONE.to_vec(),
        mph_to_mps(fixtures::FLOW_SPEED_MPH),
        fixtures::flow_sw(),
    );
    cfg.pedestrian_count = agents;
    cfg.rng_seed = 1;
    cfg
}

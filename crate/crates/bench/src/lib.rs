//! Fixtures shared by the benchmarks.

use nes_core::harness::{generate_scenario, rng_stream, ExperimentConfig};
use nes_core::Scenario;

/// The default desk-scale scenario: two GBSs, one off, 15 MUs.
pub fn desk_scenario(seed: u64) -> Scenario {
    let cfg = ExperimentConfig {
        seed,
        ..ExperimentConfig::default()
    };
    generate_scenario(&cfg, &mut rng_stream(seed, 1)).expect("default config is valid")
}

//! Fixtures shared by the benchmarks.

use greennet_core::harness::tiny_scenario;
use greennet_core::{generate_scenario, PowerModelParams, ProblemInstance, ScenarioConfig};

/// The default three-cell scenario at `rate_mbps` per UE.
pub fn default_instance(seed: u64, rate_mbps: f64) -> ProblemInstance {
    let cfg = ScenarioConfig { rate_demand_bps: rate_mbps * 1e6, ..Default::default() };
    let layout = generate_scenario(&cfg, seed).expect("default scenario is valid");
    ProblemInstance::from_layout(&layout, &PowerModelParams::default()).expect("default instance is valid").0
}

/// A one-macro, one-pico, two-UE instance on one carrier.
pub fn tiny_instance(seed: u64) -> ProblemInstance {
    let layout = generate_scenario(&tiny_scenario(), seed).expect("tiny scenario is valid");
    ProblemInstance::from_layout(&layout, &PowerModelParams::default()).expect("tiny instance is valid").0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_expected_sizes() {
        assert_eq!(default_instance(0, 2.0).num_bs(), 18);
        let t = tiny_instance(0);
        assert_eq!((t.num_bs(), t.num_ues(), t.coeffs.num_fcs()), (2, 2, 1));
    }
}

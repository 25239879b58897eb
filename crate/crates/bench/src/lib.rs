//! Shared fixtures for the criterion benches.

use maght_core::geometry::DEFAULT_HORIZONTAL_FLOOR;
use maght_core::magmap::MagneticMap;
use maght_core::synth::{gen_scenario, Scenario, ScenarioConfig, ScenarioKind};

/// The default 40×30 m open floor with 12 m cases.
pub fn open_scenario(cases: usize) -> Scenario {
    let mut cfg = ScenarioConfig::new(ScenarioKind::Open, 7);
    cfg.cases_per_length = cases;
    gen_scenario(&cfg).expect("default open scenario generates")
}

pub fn build_map(scenario: &Scenario) -> MagneticMap {
    scenario.map.build(&scenario.world, DEFAULT_HORIZONTAL_FLOOR).expect("scenario map builds")
}

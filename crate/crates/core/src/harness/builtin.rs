use std::path::Path;

use super::config::{Scenario, ScenarioConfig, ScenarioId, ValidationError};

pub const DESK_GRID: &str = include_str!("../../data/desk_grid.toml");

fn source(id: ScenarioId) -> &'static str {
    match id {
        ScenarioId::Baseline => include_str!("../../scenarios/baseline.toml"),
        ScenarioId::Uc1 => include_str!("../../scenarios/uc1.toml"),
        ScenarioId::Uc2 => include_str!("../../scenarios/uc2.toml"),
        ScenarioId::Uc3 => include_str!("../../scenarios/uc3.toml"),
        ScenarioId::Uc4 => include_str!("../../scenarios/uc4.toml"),
        ScenarioId::DosPayloadSweep => include_str!("../../scenarios/dos_payload_sweep.toml"),
        ScenarioId::DosIntervalSweep => include_str!("../../scenarios/dos_interval_sweep.toml"),
    }
}

/// The shipped configuration for `id`.
pub fn builtin_config(id: ScenarioId) -> ScenarioConfig {
    ScenarioConfig::from_toml_str(source(id)).expect("built-in scenario parses")
}

/// The shipped scenario for `id`, resolved and validated.
pub fn builtin_scenario(id: ScenarioId) -> Result<Scenario, ValidationError> {
    Scenario::resolve(builtin_config(id), Path::new("."))
}

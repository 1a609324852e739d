//! Scenario configuration, the co-simulation event loop, parameter sweeps
//! and report aggregation.

mod builtin;
mod config;
mod report;
mod sim;
mod sweep;

pub use builtin::{builtin_config, builtin_scenario, DESK_GRID};
pub use config::{
    load_config, AttackSection, DosSection, MasterSection, RoutineConfig, Scenario, ScenarioConfig,
    ScenarioId, SweepSection, ValidationError,
};
pub use report::{report, write_report, AttemptRow, ComparisonRow, ReportSummary, RttRow};
pub use sim::{
    run_scenario, write_outputs, AttackSummary, DosSummary, ExecutedControl, OverloadEvent,
    RunOutput, RunReport, WindowMetrics,
};
pub use sweep::{run_sweep, sweep_values, write_sweep, SweepKind, SweepRow, SweepSummary};

use crate::attack::AttackError;
use crate::ids::IdsError;
use crate::netsim::NetError;
use crate::scada::ScadaError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Scada(#[from] ScadaError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Ids(#[from] IdsError),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("no run reports found under {0}")]
    EmptyInput(String),
}

impl HarnessError {
    pub(crate) fn io(path: &std::path::Path, e: impl ToString) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    }

    /// Validation problems map to exit code 1, everything else to 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 1,
            _ => 2,
        }
    }
}

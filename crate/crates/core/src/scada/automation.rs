//! Control-room logic that turns readings into corrective commands.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dnp3::ControlCode;
use crate::grid::{DeviceId, GridModel};

use super::{Command, CommandValue, Measurand, PointMap, ScadaError, Snapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutomationMode {
    /// Each corrective command is issued once per point.
    Latch,
    /// Corrective commands are re-issued after every poll while the
    /// condition holds.
    Repeat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutomationPolicy {
    /// A generator reading strictly below this triggers a restore.
    pub gen_low_threshold_mw: f64,
    pub gen_restore_setpoint_mw: f64,
    pub trip_on_overload: bool,
    pub mode: AutomationMode,
}

impl Default for AutomationPolicy {
    fn default() -> Self {
        Self {
            gen_low_threshold_mw: 100.0,
            gen_restore_setpoint_mw: 1000.0,
            trip_on_overload: true,
            mode: AutomationMode::Repeat,
        }
    }
}

impl AutomationPolicy {
    pub fn validate(&self) -> Result<(), ScadaError> {
        if !(self.gen_low_threshold_mw > 0.0) || !(self.gen_restore_setpoint_mw > 0.0) {
            return Err(ScadaError::InvalidConfig(
                "automation thresholds must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Restores for low generator readings and trips for overloaded flow
    /// readings, ordered by point index (setpoints before trips on a tie).
    pub fn evaluate(&self, snapshot: &Snapshot, map: &PointMap, model: &GridModel) -> Vec<Command> {
        let mut out = Vec::new();
        for (&index, &reading) in &snapshot.analog {
            match map.analog_source(index) {
                Some(Measurand::GenOutput(g)) if reading < self.gen_low_threshold_mw => {
                    if let Some(ao) = map.setpoint_index(g) {
                        out.push(Command::setpoint(ao, self.gen_restore_setpoint_mw));
                    }
                }
                Some(Measurand::BranchFlow(b)) if self.trip_on_overload => {
                    let over = model
                        .branch(b)
                        .is_some_and(|br| reading.abs() > br.limit_mw);
                    let closed = map
                        .binary_inputs
                        .iter()
                        .find(|p| p.device == DeviceId::Branch(b))
                        .and_then(|p| snapshot.binary.get(&p.index))
                        .copied()
                        .unwrap_or(true);
                    if over && closed {
                        if let Some(bo) = map.breaker_index(b) {
                            out.push(Command::control(bo, ControlCode::Trip));
                        }
                    }
                }
                _ => {}
            }
        }
        out.sort_by_key(|c| (c.index, matches!(c.value, CommandValue::Control(_))));
        out
    }
}

/// Remembers which points already received a corrective command.
#[derive(Debug, Clone, Default)]
pub struct Latch {
    issued: BTreeSet<(bool, u16)>,
}

impl Latch {
    /// Keeps only commands for points not seen before.
    pub fn filter(&mut self, commands: Vec<Command>) -> Vec<Command> {
        commands
            .into_iter()
            .filter(|c| {
                self.issued
                    .insert((matches!(c.value, CommandValue::Control(_)), c.index))
            })
            .collect()
    }
}

//! Quasi-steady grid model: DC power flow, outage distribution factors,
//! contingency ranking, device actuation and generator ramping.

mod contingency;
mod flow;
mod model;

pub use contingency::{
    rank_contingencies, rank_contingencies_with_beam, score_outage, Contingency, DEFAULT_BEAM,
};
pub use flow::{dc_power_flow, lodf, GridState, OverloadEntry, OverloadReport};
pub use model::{
    Branch, BranchId, Bus, BusId, DeviceId, GenId, Generator, GridModel, Load, LoadId,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("invalid grid model: {0}")]
    Invalid(String),
    #[error("unknown device {0}")]
    UnknownDevice(DeviceId),
    #[error("branch {0} is already open")]
    BranchOpen(BranchId),
    #[error("outage of {0} separates part of the network from the slack bus")]
    IslandingOutage(BranchId),
    #[error("contingency set size must be 1..=4, got {0}")]
    InvalidSetSize(usize),
    #[error("time step must be positive")]
    NonPositiveStep,
}

/// A control applied to a device through an outstation or directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ControlAction {
    OpenBranch { branch: BranchId },
    CloseBranch { branch: BranchId },
    SetSetpoint { generator: GenId, mw: f64 },
    TripLoad { load: LoadId },
    RestoreLoad { load: LoadId },
}

/// A grid model together with its latest solved state.
#[derive(Debug, Clone)]
pub struct GridSim {
    model: GridModel,
    state: GridState,
}

impl GridSim {
    pub fn new(model: GridModel) -> Result<Self, GridError> {
        model.validate()?;
        let state = dc_power_flow(&model);
        Ok(Self { model, state })
    }

    pub fn model(&self) -> &GridModel {
        &self.model
    }

    pub fn state(&self) -> &GridState {
        &self.state
    }

    pub fn overloads(&self) -> OverloadReport {
        OverloadReport::from_state(&self.model, &self.state)
    }

    /// Breaker and load actions take effect at once (the state is
    /// re-solved); setpoints are clamped to [0, max] and reached by ramping
    /// in [`GridSim::step`].
    pub fn apply_control(&mut self, action: ControlAction) -> Result<(), GridError> {
        match action {
            ControlAction::OpenBranch { branch } | ControlAction::CloseBranch { branch } => {
                let br = self
                    .model
                    .branch_mut(branch)
                    .ok_or(GridError::UnknownDevice(DeviceId::Branch(branch)))?;
                br.breaker_closed = matches!(action, ControlAction::CloseBranch { .. });
            }
            ControlAction::SetSetpoint { generator, mw } => {
                let g = self
                    .model
                    .generator_mut(generator)
                    .ok_or(GridError::UnknownDevice(DeviceId::Generator(generator)))?;
                g.setpoint_mw = mw.clamp(0.0, g.max_mw);
            }
            ControlAction::TripLoad { load } | ControlAction::RestoreLoad { load } => {
                let l = self
                    .model
                    .load_mut(load)
                    .ok_or(GridError::UnknownDevice(DeviceId::Load(load)))?;
                l.in_service = matches!(action, ControlAction::RestoreLoad { .. });
            }
        }
        self.state = dc_power_flow(&self.model);
        Ok(())
    }

    /// Moves every non-slack generator toward its setpoint by at most
    /// `ramp * dt`, then re-solves.
    pub fn step(&mut self, dt: f64) -> Result<&GridState, GridError> {
        if !(dt > 0.0) {
            return Err(GridError::NonPositiveStep);
        }
        let slack = self.model.slack_generator();
        for g in self.model.generators.iter_mut() {
            if Some(g.id) == slack || !g.in_service {
                continue;
            }
            let max_change = g.ramp_mw_per_s * dt;
            let delta = (g.setpoint_mw - g.output_mw).clamp(-max_change, max_change);
            g.output_mw += delta;
        }
        self.state = dc_power_flow(&self.model);
        Ok(&self.state)
    }
}

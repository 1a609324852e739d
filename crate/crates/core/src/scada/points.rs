use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::grid::{BranchId, DeviceId, GenId, GridModel, GridState};

use super::ScadaError;

/// What an analog input reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measurand {
    GenOutput(GenId),
    BranchFlow(BranchId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryInputPoint {
    pub index: u16,
    pub device: DeviceId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogInputPoint {
    pub index: u16,
    pub source: Measurand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakerPoint {
    pub index: u16,
    pub branch: BranchId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetpointPoint {
    pub index: u16,
    pub generator: GenId,
}

/// Point indices served by one outstation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointMap {
    #[serde(default)]
    pub binary_inputs: Vec<BinaryInputPoint>,
    #[serde(default)]
    pub analog_inputs: Vec<AnalogInputPoint>,
    #[serde(default)]
    pub binary_outputs: Vec<BreakerPoint>,
    #[serde(default)]
    pub analog_outputs: Vec<SetpointPoint>,
}

/// Analog inputs for branch flows start here; generator outputs take the
/// low indices.
pub const FLOW_INDEX_BASE: u16 = 100;

impl PointMap {
    /// Every branch as a breaker status and command point, every generator
    /// output as an analog input, every non-slack generator setpoint as an
    /// analog output, and the flows of `monitored` branches as analog
    /// inputs. Keeping the monitored set small keeps a full Read response
    /// inside one link frame.
    pub fn for_grid(model: &GridModel, monitored: &[BranchId]) -> Self {
        let slack = model.slack_generator();
        let mut map = PointMap::default();
        for (i, br) in model.branches.iter().enumerate() {
            map.binary_inputs.push(BinaryInputPoint {
                index: i as u16,
                device: DeviceId::Branch(br.id),
            });
            map.binary_outputs.push(BreakerPoint {
                index: i as u16,
                branch: br.id,
            });
        }
        for (i, g) in model.generators.iter().enumerate() {
            map.analog_inputs.push(AnalogInputPoint {
                index: i as u16,
                source: Measurand::GenOutput(g.id),
            });
            if Some(g.id) != slack {
                map.analog_outputs.push(SetpointPoint {
                    index: i as u16,
                    generator: g.id,
                });
            }
        }
        for (i, br) in model.branches.iter().enumerate() {
            if !monitored.contains(&br.id) {
                continue;
            }
            map.analog_inputs.push(AnalogInputPoint {
                index: FLOW_INDEX_BASE + i as u16,
                source: Measurand::BranchFlow(br.id),
            });
        }
        map
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ScadaError> {
        toml::from_str(s).map_err(|e| ScadaError::InvalidConfig(e.message().to_string()))
    }

    pub fn validate(&self, model: &GridModel) -> Result<(), ScadaError> {
        fn unique(name: &str, idx: impl Iterator<Item = u16>) -> Result<(), ScadaError> {
            let mut seen = BTreeSet::new();
            for i in idx {
                if !seen.insert(i) {
                    return Err(ScadaError::InvalidConfig(format!(
                        "duplicate {name} index {i}"
                    )));
                }
            }
            Ok(())
        }
        unique("binary input", self.binary_inputs.iter().map(|p| p.index))?;
        unique("analog input", self.analog_inputs.iter().map(|p| p.index))?;
        unique("binary output", self.binary_outputs.iter().map(|p| p.index))?;
        unique("analog output", self.analog_outputs.iter().map(|p| p.index))?;
        let missing = |d: DeviceId| {
            Err(ScadaError::InvalidConfig(format!(
                "point references unknown device {d}"
            )))
        };
        for d in self
            .binary_inputs
            .iter()
            .map(|p| p.device)
            .chain(self.analog_inputs.iter().map(|p| match p.source {
                Measurand::GenOutput(g) => DeviceId::Generator(g),
                Measurand::BranchFlow(b) => DeviceId::Branch(b),
            }))
            .chain(
                self.binary_outputs
                    .iter()
                    .map(|p| DeviceId::Branch(p.branch)),
            )
            .chain(
                self.analog_outputs
                    .iter()
                    .map(|p| DeviceId::Generator(p.generator)),
            )
        {
            if !model.contains(d) {
                return missing(d);
            }
        }
        Ok(())
    }

    pub fn analog_source(&self, index: u16) -> Option<Measurand> {
        self.analog_inputs
            .iter()
            .find(|p| p.index == index)
            .map(|p| p.source)
    }

    pub fn gen_reading_index(&self, g: GenId) -> Option<u16> {
        self.analog_inputs
            .iter()
            .find(|p| p.source == Measurand::GenOutput(g))
            .map(|p| p.index)
    }

    pub fn flow_reading_index(&self, b: BranchId) -> Option<u16> {
        self.analog_inputs
            .iter()
            .find(|p| p.source == Measurand::BranchFlow(b))
            .map(|p| p.index)
    }

    pub fn breaker_index(&self, b: BranchId) -> Option<u16> {
        self.binary_outputs
            .iter()
            .find(|p| p.branch == b)
            .map(|p| p.index)
    }

    pub fn breaker_at(&self, index: u16) -> Option<BranchId> {
        self.binary_outputs
            .iter()
            .find(|p| p.index == index)
            .map(|p| p.branch)
    }

    pub fn setpoint_index(&self, g: GenId) -> Option<u16> {
        self.analog_outputs
            .iter()
            .find(|p| p.generator == g)
            .map(|p| p.index)
    }

    pub fn setpoint_at(&self, index: u16) -> Option<GenId> {
        self.analog_outputs
            .iter()
            .find(|p| p.index == index)
            .map(|p| p.generator)
    }

    /// Number of input points a Read returns.
    pub fn input_count(&self) -> usize {
        self.binary_inputs.len() + self.analog_inputs.len()
    }

    pub fn analog_value(state: &GridState, source: Measurand) -> f64 {
        match source {
            Measurand::GenOutput(g) => state.output(g),
            Measurand::BranchFlow(b) => state.flow(b),
        }
    }
}

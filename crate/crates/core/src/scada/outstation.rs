use serde::{Deserialize, Serialize};

use crate::dnp3::{
    decode_message, encode_message, AppControl, AppFragment, CommandStatus, FunctionCode,
    LinkHeader, Message, PointGroup, PointKind, PointValue, CONTROL_OUTSTATION_DATA,
};
use crate::grid::{ControlAction, DeviceId, GridSim};

use super::{PointMap, ScadaError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutstationConfig {
    pub address: u16,
    pub master_address: u16,
    /// How long a Select stays valid for the matching Operate.
    #[serde(default = "default_select_timeout")]
    pub select_timeout_s: f64,
    /// Send an unsolicited response when a command changes a breaker.
    #[serde(default)]
    pub unsolicited: bool,
}

fn default_select_timeout() -> f64 {
    10.0
}

impl Default for OutstationConfig {
    fn default() -> Self {
        Self {
            address: 10,
            master_address: 1,
            select_timeout_s: default_select_timeout(),
            unsolicited: false,
        }
    }
}

/// What serving one request produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Served {
    pub function: FunctionCode,
    pub response: Vec<u8>,
    pub actions: Vec<ControlAction>,
    pub unsolicited: Option<Vec<u8>>,
}

#[derive(Debug, Clone)]
pub struct Outstation {
    config: OutstationConfig,
    map: PointMap,
    selected: Option<(Vec<PointGroup>, f64)>,
    transport_seq: u8,
    unsolicited_seq: u8,
}

impl Outstation {
    pub fn new(config: OutstationConfig, map: PointMap) -> Self {
        Self {
            config,
            map,
            selected: None,
            transport_seq: 0,
            unsolicited_seq: 0,
        }
    }

    pub fn config(&self) -> &OutstationConfig {
        &self.config
    }

    pub fn map(&self) -> &PointMap {
        &self.map
    }

    /// Handles one request. Requests addressed elsewhere get no response;
    /// undecodable ones are an error and also get none.
    pub fn serve(
        &mut self,
        grid: &mut GridSim,
        octets: &[u8],
        now: f64,
    ) -> Result<Option<Served>, ScadaError> {
        let msg = decode_message(octets)?;
        if msg.header.destination != self.config.address || msg.fragment.function.is_response() {
            return Ok(None);
        }
        let req = msg.fragment;
        let mut actions = Vec::new();
        let objects = match req.function {
            FunctionCode::Read | FunctionCode::Read2 => self.read_groups(grid),
            FunctionCode::Select => {
                let echo = self.echo(&req.objects, |os, kind, index, _| {
                    os.check(grid, kind, index)
                });
                let all_ok = echo
                    .iter()
                    .flat_map(|g| &g.points)
                    .all(|(_, v)| v.status() == Some(CommandStatus::Success));
                self.selected = all_ok.then(|| (req.objects.clone(), now));
                echo
            }
            FunctionCode::Operate => {
                let matches = self.selected.take().is_some_and(|(sel, at)| {
                    sel == req.objects && now - at <= self.config.select_timeout_s
                });
                if matches {
                    self.execute(grid, &req.objects, &mut actions)?
                } else {
                    self.echo(&req.objects, |_, _, _, _| CommandStatus::NoSelect)
                }
            }
            FunctionCode::DirectOperate => self.execute(grid, &req.objects, &mut actions)?,
            _ => vec![],
        };
        let response = self.encode(AppFragment::response(req.control.seq, objects));
        let breaker_changed = actions.iter().any(|a| {
            matches!(
                a,
                ControlAction::OpenBranch { .. } | ControlAction::CloseBranch { .. }
            )
        });
        let unsolicited = (self.config.unsolicited && breaker_changed).then(|| {
            let seq = self.unsolicited_seq;
            self.unsolicited_seq = (seq + 1) & 0x0F;
            let mut frag = AppFragment::response(seq, vec![self.binary_group(grid)]);
            frag.function = FunctionCode::UnsolicitedResponse;
            frag.control = AppControl {
                unsolicited: true,
                ..AppControl::single(seq)
            };
            self.encode(frag)
        });
        Ok(Some(Served {
            function: req.function,
            response,
            actions,
            unsolicited,
        }))
    }

    fn encode(&mut self, fragment: AppFragment) -> Vec<u8> {
        let msg = Message {
            header: LinkHeader {
                control: CONTROL_OUTSTATION_DATA,
                destination: self.config.master_address,
                source: self.config.address,
            },
            transport_seq: self.transport_seq,
            fragment,
        };
        self.transport_seq = (self.transport_seq + 1) & 0x3F;
        encode_message(&msg).expect("point map must fit one frame")
    }

    fn binary_group(&self, grid: &GridSim) -> PointGroup {
        let mut g = PointGroup::new(PointKind::BinaryInput);
        g.points = self
            .map
            .binary_inputs
            .iter()
            .map(|p| (p.index, PointValue::Binary(grid.state().status(p.device))))
            .collect();
        g.points.sort_by_key(|(i, _)| *i);
        g
    }

    fn read_groups(&self, grid: &GridSim) -> Vec<PointGroup> {
        let mut ai = PointGroup::new(PointKind::AnalogInput);
        ai.points = self
            .map
            .analog_inputs
            .iter()
            .map(|p| {
                (
                    p.index,
                    PointValue::Analog(PointMap::analog_value(grid.state(), p.source)),
                )
            })
            .collect();
        ai.points.sort_by_key(|(i, _)| *i);
        vec![self.binary_group(grid), ai]
            .into_iter()
            .filter(|g| !g.points.is_empty())
            .collect()
    }

    fn check(&self, grid: &GridSim, kind: PointKind, index: u16) -> CommandStatus {
        let device = match kind {
            PointKind::BinaryOutputCommand => self.map.breaker_at(index).map(DeviceId::Branch),
            PointKind::AnalogOutputCommand => self.map.setpoint_at(index).map(DeviceId::Generator),
            _ => return CommandStatus::FormatError,
        };
        match device {
            Some(d) if grid.model().contains(d) => CommandStatus::Success,
            _ => CommandStatus::NotSupported,
        }
    }

    /// Copies the request objects, replacing every status with `f`.
    fn echo(
        &self,
        objects: &[PointGroup],
        mut f: impl FnMut(&Self, PointKind, u16, &PointValue) -> CommandStatus,
    ) -> Vec<PointGroup> {
        objects
            .iter()
            .map(|g| PointGroup {
                kind: g.kind,
                points: g
                    .points
                    .iter()
                    .map(|(i, v)| (*i, with_status(*v, f(self, g.kind, *i, v))))
                    .collect(),
            })
            .collect()
    }

    fn execute(
        &self,
        grid: &mut GridSim,
        objects: &[PointGroup],
        actions: &mut Vec<ControlAction>,
    ) -> Result<Vec<PointGroup>, ScadaError> {
        let mut planned = Vec::new();
        let echo = self.echo(objects, |os, kind, index, value| {
            let status = os.check(grid, kind, index);
            if status == CommandStatus::Success {
                let action = match *value {
                    PointValue::Control { code, .. } => {
                        let branch = os.map.breaker_at(index).expect("checked");
                        if code.closes() {
                            ControlAction::CloseBranch { branch }
                        } else {
                            ControlAction::OpenBranch { branch }
                        }
                    }
                    PointValue::Setpoint { value, .. } => ControlAction::SetSetpoint {
                        generator: os.map.setpoint_at(index).expect("checked"),
                        mw: value,
                    },
                    _ => return CommandStatus::FormatError,
                };
                planned.push(action);
            }
            status
        });
        for action in planned {
            grid.apply_control(action)?;
            actions.push(action);
        }
        Ok(echo)
    }
}

fn with_status(value: PointValue, status: CommandStatus) -> PointValue {
    match value {
        PointValue::Control { code, .. } => PointValue::Control { code, status },
        PointValue::Setpoint { value, .. } => PointValue::Setpoint { value, status },
        other => other,
    }
}

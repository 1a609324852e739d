//! DNP3 endpoints on top of the grid model.
//!
//! [`Master`] and [`Outstation`] are sans-IO state machines: they turn
//! octets into octets and leave transport to the caller, so the same code
//! runs inside the network simulator and in plain unit tests.
//! [`automation`] holds the control-room logic that reacts to readings.

pub mod automation;
mod master;
mod outstation;
mod points;

pub use automation::{AutomationMode, AutomationPolicy, Latch};
pub use master::{Master, MasterEvent};
pub use outstation::{Outstation, OutstationConfig, Served};
pub use points::{
    AnalogInputPoint, BinaryInputPoint, BreakerPoint, Measurand, PointMap, SetpointPoint,
    FLOW_INDEX_BASE,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dnp3::{CodecError, ControlCode};
use crate::grid::GridError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScadaError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("response does not match the request in flight")]
    UnexpectedResponse,
    #[error("operate without a matching select")]
    SelectOperateMismatch,
    #[error("no response within the timeout")]
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandMode {
    /// Select (0x03) then Operate (0x04).
    SelectOperate,
    /// Direct Operate (0x05).
    DirectOperate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MasterConfig {
    pub poll_interval_s: f64,
    pub command_mode: CommandMode,
    pub master_address: u16,
    pub outstation_address: u16,
    /// A request with no answer after this long is sent again.
    #[serde(default = "default_response_timeout")]
    pub response_timeout_s: f64,
}

fn default_response_timeout() -> f64 {
    5.0
}

impl Default for MasterConfig {
    fn default() -> Self {
        Self {
            poll_interval_s: 30.0,
            command_mode: CommandMode::DirectOperate,
            master_address: 1,
            outstation_address: 10,
            response_timeout_s: default_response_timeout(),
        }
    }
}

impl MasterConfig {
    pub fn validate(&self) -> Result<(), ScadaError> {
        if !(self.poll_interval_s > 0.0) {
            return Err(ScadaError::InvalidConfig(
                "poll_interval_s must be > 0".into(),
            ));
        }
        if !(self.response_timeout_s > 0.0) {
            return Err(ScadaError::InvalidConfig(
                "response_timeout_s must be > 0".into(),
            ));
        }
        if self.master_address == self.outstation_address {
            return Err(ScadaError::InvalidConfig(
                "master and outstation addresses must differ".into(),
            ));
        }
        Ok(())
    }

    /// Poll instants `0, T, 2T, ...` strictly before `until`.
    pub fn poll_times(&self, until: f64) -> Vec<f64> {
        (0..)
            .map(|k| k as f64 * self.poll_interval_s)
            .take_while(|t| *t < until)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum CommandValue {
    Control(ControlCode),
    Setpoint(f64),
}

/// A write to one output point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub index: u16,
    pub value: CommandValue,
}

impl Command {
    pub fn control(index: u16, code: ControlCode) -> Self {
        Self {
            index,
            value: CommandValue::Control(code),
        }
    }

    pub fn setpoint(index: u16, mw: f64) -> Self {
        Self {
            index,
            value: CommandValue::Setpoint(mw),
        }
    }
}

/// Point values from one Read response.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub binary: BTreeMap<u16, bool>,
    pub analog: BTreeMap<u16, f64>,
}

impl Snapshot {
    pub fn len(&self) -> usize {
        self.binary.len() + self.analog.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dnp3::{CommandStatus, FunctionCode};
    use crate::grid::{BranchId, DeviceId, GenId, GridModel, GridSim};

    fn desk() -> GridSim {
        let m = GridModel::from_toml_str(include_str!("../../data/desk_grid.toml")).unwrap();
        GridSim::new(m).unwrap()
    }

    fn pair(mode: CommandMode, map: PointMap) -> (Master, Outstation) {
        let master = Master::new(MasterConfig {
            command_mode: mode,
            ..MasterConfig::default()
        })
        .unwrap();
        (master, Outstation::new(OutstationConfig::default(), map))
    }

    /// Runs request/response round trips until the master is idle.
    fn drain(
        m: &mut Master,
        os: &mut Outstation,
        grid: &mut GridSim,
        now: f64,
    ) -> Vec<MasterEvent> {
        let mut events = Vec::new();
        while let Some(req) = m.next_request(now) {
            let served = os.serve(grid, &req, now).unwrap().unwrap();
            events.push(m.on_message(&served.response, now).unwrap());
        }
        events
    }

    #[test]
    fn poll_times_follow_interval() {
        let cfg = MasterConfig::default();
        assert_eq!(cfg.poll_times(100.0), vec![0.0, 30.0, 60.0, 90.0]);
        let bad = MasterConfig {
            poll_interval_s: 0.0,
            ..cfg
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn snapshot_holds_exactly_the_mapped_points() {
        let mut grid = desk();
        let map = PointMap {
            binary_inputs: vec![BinaryInputPoint {
                index: 0,
                device: DeviceId::Branch(BranchId(1)),
            }],
            analog_inputs: vec![
                AnalogInputPoint {
                    index: 0,
                    source: Measurand::GenOutput(GenId(2)),
                },
                AnalogInputPoint {
                    index: 1,
                    source: Measurand::BranchFlow(BranchId(4)),
                },
            ],
            ..PointMap::default()
        };
        map.validate(grid.model()).unwrap();
        let (mut m, mut os) = pair(CommandMode::DirectOperate, map);
        assert!(m.enqueue_poll());
        assert!(!m.enqueue_poll());
        let events = drain(&mut m, &mut os, &mut grid, 0.0);
        let MasterEvent::Snapshot(snap) = &events[0] else {
            panic!("expected a snapshot, got {events:?}");
        };
        assert_eq!(snap.len(), 3);
        assert_eq!(snap.analog[&0], grid.state().output(GenId(2)));
        assert_eq!(snap.analog[&1], grid.state().flow(BranchId(4)));
        assert!(snap.binary[&0]);
    }

    #[test]
    fn full_map_snapshot_equals_grid_state() {
        let mut grid = desk();
        let ids: Vec<BranchId> = grid.model().branches.iter().map(|b| b.id).take(5).collect();
        let map = PointMap::for_grid(grid.model(), &ids);
        let (mut m, mut os) = pair(CommandMode::DirectOperate, map.clone());
        m.enqueue_poll();
        drain(&mut m, &mut os, &mut grid, 0.0);
        let snap = m.latest().unwrap();
        assert_eq!(snap.len(), map.input_count());
        for p in &map.analog_inputs {
            assert_eq!(
                snap.analog[&p.index],
                PointMap::analog_value(grid.state(), p.source)
            );
        }
        for p in &map.binary_inputs {
            assert_eq!(snap.binary[&p.index], grid.state().status(p.device));
        }
    }

    #[test]
    fn direct_operate_trip_opens_branch_and_is_idempotent() {
        let mut grid = desk();
        let map = PointMap::for_grid(grid.model(), &[]);
        let bo = map.breaker_index(BranchId(5)).unwrap();
        let (mut m, mut os) = pair(CommandMode::DirectOperate, map);
        for _ in 0..2 {
            m.enqueue_command(Command::control(bo, ControlCode::Trip));
            let events = drain(&mut m, &mut os, &mut grid, 1.0);
            assert!(matches!(
                events[..],
                [MasterEvent::CommandDone {
                    status: CommandStatus::Success,
                    ..
                }]
            ));
            assert!(!grid.state().status(DeviceId::Branch(BranchId(5))));
        }
        m.enqueue_command(Command::control(bo, ControlCode::Close));
        drain(&mut m, &mut os, &mut grid, 2.0);
        assert!(grid.state().status(DeviceId::Branch(BranchId(5))));
    }

    #[test]
    fn select_then_operate_sets_setpoint() {
        let mut grid = desk();
        let map = PointMap::for_grid(grid.model(), &[]);
        let g = GenId(3);
        let ao = map.setpoint_index(g).unwrap();
        let (mut m, mut os) = pair(CommandMode::SelectOperate, map);
        m.enqueue_command(Command::setpoint(ao, 1000.0));
        let events = drain(&mut m, &mut os, &mut grid, 0.0);
        assert!(matches!(events[0], MasterEvent::Selected(_)));
        assert!(matches!(
            events[1],
            MasterEvent::CommandDone {
                status: CommandStatus::Success,
                ..
            }
        ));
        let gen = grid.model().generator(g).unwrap();
        assert_eq!(gen.setpoint_mw, 1000.0_f64.min(gen.max_mw));
    }

    fn raw_request(function: FunctionCode, command: Command, seq: u8) -> Vec<u8> {
        use crate::dnp3::*;
        let (kind, value) = match command.value {
            CommandValue::Control(code) => (
                PointKind::BinaryOutputCommand,
                PointValue::Control {
                    code,
                    status: CommandStatus::Success,
                },
            ),
            CommandValue::Setpoint(v) => (
                PointKind::AnalogOutputCommand,
                PointValue::Setpoint {
                    value: v,
                    status: CommandStatus::Success,
                },
            ),
        };
        encode_message(&Message {
            header: LinkHeader {
                control: CONTROL_MASTER_DATA,
                destination: 10,
                source: 1,
            },
            transport_seq: seq,
            fragment: AppFragment::request(
                seq,
                function,
                vec![PointGroup {
                    kind,
                    points: vec![(command.index, value)],
                }],
            ),
        })
        .unwrap()
    }

    fn echoed_status(served: &Served) -> CommandStatus {
        let msg = crate::dnp3::decode_message(&served.response).unwrap();
        let (_, _, v) = msg.fragment.points().next().unwrap();
        v.status().unwrap()
    }

    #[test]
    fn operate_without_select_is_rejected() {
        let mut grid = desk();
        let map = PointMap::for_grid(grid.model(), &[]);
        let bo = map.breaker_index(BranchId(5)).unwrap();
        let mut os = Outstation::new(OutstationConfig::default(), map);
        let before = grid.state().clone();
        let trip = Command::control(bo, ControlCode::Trip);
        let served = os
            .serve(&mut grid, &raw_request(FunctionCode::Operate, trip, 0), 0.0)
            .unwrap()
            .unwrap();
        assert_eq!(echoed_status(&served), CommandStatus::NoSelect);
        assert!(served.actions.is_empty());
        assert_eq!(grid.state(), &before);

        // A select for a different value does not authorise this operate.
        let close = Command::control(bo, ControlCode::Close);
        os.serve(&mut grid, &raw_request(FunctionCode::Select, close, 1), 0.0)
            .unwrap();
        let served = os
            .serve(&mut grid, &raw_request(FunctionCode::Operate, trip, 2), 1.0)
            .unwrap()
            .unwrap();
        assert_eq!(echoed_status(&served), CommandStatus::NoSelect);

        // Nor does a stale one.
        os.serve(&mut grid, &raw_request(FunctionCode::Select, trip, 3), 0.0)
            .unwrap();
        let served = os
            .serve(
                &mut grid,
                &raw_request(FunctionCode::Operate, trip, 4),
                10.5,
            )
            .unwrap()
            .unwrap();
        assert_eq!(echoed_status(&served), CommandStatus::NoSelect);
        assert_eq!(grid.state(), &before);
    }

    #[test]
    fn unmapped_index_echoes_error_and_leaves_grid_alone() {
        let mut grid = desk();
        let map = PointMap::for_grid(grid.model(), &[]);
        let (mut m, mut os) = pair(CommandMode::DirectOperate, map);
        let before = grid.state().clone();
        m.enqueue_command(Command::control(999, ControlCode::Trip));
        let events = drain(&mut m, &mut os, &mut grid, 0.0);
        assert!(matches!(
            events[0],
            MasterEvent::CommandDone {
                status: CommandStatus::NotSupported,
                ..
            }
        ));
        assert_eq!(grid.state(), &before);
    }

    #[test]
    fn bad_crc_gets_no_response() {
        let mut grid = desk();
        let mut os = Outstation::new(OutstationConfig::default(), PointMap::default());
        let mut req = raw_request(
            FunctionCode::DirectOperate,
            Command::control(0, ControlCode::Trip),
            0,
        );
        let n = req.len();
        req[n - 3] ^= 0x01;
        assert!(os.serve(&mut grid, &req, 0.0).is_err());
    }

    #[test]
    fn requests_only_reach_the_configured_peer() {
        let mut m = Master::new(MasterConfig {
            outstation_address: 42,
            ..MasterConfig::default()
        })
        .unwrap();
        m.enqueue_poll();
        let req = crate::dnp3::decode_message(&m.next_request(0.0).unwrap()).unwrap();
        assert_eq!(req.header.destination, 42);
        // Another outstation ignores it.
        let mut grid = desk();
        let mut os = Outstation::new(OutstationConfig::default(), PointMap::default());
        let bytes = crate::dnp3::encode_message(&req).unwrap();
        assert_eq!(os.serve(&mut grid, &bytes, 0.0).unwrap(), None);
    }

    #[test]
    fn timeout_requeues_the_request() {
        let mut m = Master::new(MasterConfig::default()).unwrap();
        m.enqueue_poll();
        let first = m.next_request(0.0).unwrap();
        assert!(m.next_request(1.0).is_none());
        assert!(m.check_timeout(1.0).is_ok());
        assert_eq!(m.check_timeout(5.0), Err(ScadaError::Timeout));
        let again = m.next_request(5.0).unwrap();
        assert_ne!(
            first, again,
            "a resent request gets a fresh sequence number"
        );
    }

    #[test]
    fn unsolicited_breaker_change_when_enabled() {
        let mut grid = desk();
        let map = PointMap::for_grid(grid.model(), &[]);
        let bo = map.breaker_index(BranchId(5)).unwrap();
        let cfg = OutstationConfig {
            unsolicited: true,
            ..OutstationConfig::default()
        };
        let mut os = Outstation::new(cfg, map);
        let served = os
            .serve(
                &mut grid,
                &raw_request(
                    FunctionCode::DirectOperate,
                    Command::control(bo, ControlCode::Trip),
                    0,
                ),
                0.0,
            )
            .unwrap()
            .unwrap();
        let unsol = served.unsolicited.expect("unsolicited response");
        let mut m = Master::new(MasterConfig::default()).unwrap();
        let MasterEvent::Unsolicited(snap) = m.on_message(&unsol, 0.0).unwrap() else {
            panic!("expected unsolicited");
        };
        assert_eq!(snap.binary.get(&bo), Some(&false));
    }

    fn snapshot_with(map: &PointMap, readings: &[(Measurand, f64)]) -> Snapshot {
        let mut s = Snapshot::default();
        for (src, v) in readings {
            let idx = map
                .analog_inputs
                .iter()
                .find(|p| p.source == *src)
                .unwrap()
                .index;
            s.analog.insert(idx, *v);
        }
        s
    }

    #[test]
    fn automation_restores_low_generator() {
        let grid = desk();
        let map = PointMap::for_grid(grid.model(), &[BranchId(10)]);
        let policy = AutomationPolicy::default();
        let snap = snapshot_with(&map, &[(Measurand::GenOutput(GenId(3)), 20.0)]);
        let cmds = policy.evaluate(&snap, &map, grid.model());
        assert_eq!(
            cmds,
            vec![Command::setpoint(
                map.setpoint_index(GenId(3)).unwrap(),
                1000.0
            )]
        );
    }

    #[test]
    fn automation_trips_overloaded_branch_and_ignores_nominal() {
        let grid = desk();
        let map = PointMap::for_grid(grid.model(), &[BranchId(10)]);
        let policy = AutomationPolicy::default();
        let limit = grid.model().branch(BranchId(10)).unwrap().limit_mw;
        let hot = snapshot_with(
            &map,
            &[(
                Measurand::BranchFlow(BranchId(10)),
                3000.0_f64.max(2.0 * limit),
            )],
        );
        assert_eq!(
            policy.evaluate(&hot, &map, grid.model()),
            vec![Command::control(
                map.breaker_index(BranchId(10)).unwrap(),
                ControlCode::Trip
            )]
        );
        let off = AutomationPolicy {
            trip_on_overload: false,
            ..policy.clone()
        };
        assert!(off.evaluate(&hot, &map, grid.model()).is_empty());

        let nominal = snapshot_with(
            &map,
            &[
                (Measurand::GenOutput(GenId(3)), 500.0),
                (Measurand::BranchFlow(BranchId(10)), limit),
            ],
        );
        assert!(policy.evaluate(&nominal, &map, grid.model()).is_empty());
    }

    #[test]
    fn automation_orders_by_index_and_latch_filters_repeats() {
        let grid = desk();
        let map = PointMap::for_grid(grid.model(), &[]);
        let policy = AutomationPolicy::default();
        let snap = snapshot_with(
            &map,
            &[
                (Measurand::GenOutput(GenId(5)), 0.0),
                (Measurand::GenOutput(GenId(2)), 0.0),
            ],
        );
        let cmds = policy.evaluate(&snap, &map, grid.model());
        assert_eq!(cmds.len(), 2);
        assert!(cmds[0].index < cmds[1].index);
        let mut latch = Latch::default();
        assert_eq!(latch.filter(cmds.clone()).len(), 2);
        assert!(latch.filter(cmds).is_empty());
    }
}

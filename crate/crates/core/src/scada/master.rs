use std::collections::VecDeque;

use crate::dnp3::{
    decode_message, encode_message, AppFragment, CommandStatus, FunctionCode, LinkHeader, Message,
    PointGroup, PointKind, PointValue, CONTROL_MASTER_DATA,
};

use super::{Command, CommandMode, CommandValue, MasterConfig, ScadaError, Snapshot};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stage {
    Read,
    Select(Command),
    Operate(Command),
    Direct(Command),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MasterEvent {
    Snapshot(Snapshot),
    /// A command finished; `status` is the outstation's echo for the last
    /// stage it reached.
    CommandDone {
        command: Command,
        status: CommandStatus,
    },
    /// The select was accepted and the operate is now queued.
    Selected(Command),
    /// Binary inputs pushed by the outstation without a request.
    Unsolicited(Snapshot),
}

/// Stop-and-wait DNP3 master for one outstation.
#[derive(Debug, Clone)]
pub struct Master {
    config: MasterConfig,
    queue: VecDeque<Stage>,
    in_flight: Option<(Stage, u8, f64)>,
    app_seq: u8,
    transport_seq: u8,
    latest: Option<Snapshot>,
}

impl Master {
    pub fn new(config: MasterConfig) -> Result<Self, ScadaError> {
        config.validate()?;
        Ok(Self {
            config,
            queue: VecDeque::new(),
            in_flight: None,
            app_seq: 0,
            transport_seq: 0,
            latest: None,
        })
    }

    pub fn config(&self) -> &MasterConfig {
        &self.config
    }

    pub fn latest(&self) -> Option<&Snapshot> {
        self.latest.as_ref()
    }

    pub fn is_idle(&self) -> bool {
        self.in_flight.is_none() && self.queue.is_empty()
    }

    /// Queues a Read unless one is already waiting or in flight.
    pub fn enqueue_poll(&mut self) -> bool {
        let pending = self.queue.contains(&Stage::Read)
            || matches!(self.in_flight, Some((Stage::Read, _, _)));
        if !pending {
            self.queue.push_back(Stage::Read);
        }
        !pending
    }

    pub fn enqueue_command(&mut self, command: Command) {
        self.queue.push_back(match self.config.command_mode {
            CommandMode::SelectOperate => Stage::Select(command),
            CommandMode::DirectOperate => Stage::Direct(command),
        });
    }

    /// Encoded request to send now, if nothing is awaiting a response.
    pub fn next_request(&mut self, now: f64) -> Option<Vec<u8>> {
        if self.in_flight.is_some() {
            return None;
        }
        let stage = self.queue.pop_front()?;
        let seq = self.app_seq;
        self.app_seq = (self.app_seq + 1) & 0x0F;
        let fragment = match stage {
            Stage::Read => AppFragment::request(seq, FunctionCode::Read, vec![]),
            Stage::Select(c) => command_fragment(seq, FunctionCode::Select, c),
            Stage::Operate(c) => command_fragment(seq, FunctionCode::Operate, c),
            Stage::Direct(c) => command_fragment(seq, FunctionCode::DirectOperate, c),
        };
        let msg = Message {
            header: LinkHeader {
                control: CONTROL_MASTER_DATA,
                destination: self.config.outstation_address,
                source: self.config.master_address,
            },
            transport_seq: self.transport_seq,
            fragment,
        };
        self.transport_seq = (self.transport_seq + 1) & 0x3F;
        self.in_flight = Some((stage, seq, now));
        Some(encode_message(&msg).expect("master requests fit one frame"))
    }

    /// Puts the outstanding request back at the head of the queue, e.g.
    /// after the connection was re-established.
    pub fn requeue_in_flight(&mut self) {
        if let Some((stage, _, _)) = self.in_flight.take() {
            self.queue.push_front(stage);
        }
    }

    /// Requeues the outstanding request if it has waited too long.
    pub fn check_timeout(&mut self, now: f64) -> Result<(), ScadaError> {
        match self.in_flight {
            Some((_, _, sent)) if now - sent >= self.config.response_timeout_s => {
                self.requeue_in_flight();
                Err(ScadaError::Timeout)
            }
            _ => Ok(()),
        }
    }

    pub fn on_message(&mut self, octets: &[u8], now: f64) -> Result<MasterEvent, ScadaError> {
        let msg = decode_message(octets)?;
        if msg.fragment.function == FunctionCode::UnsolicitedResponse
            && msg.header.source == self.config.outstation_address
        {
            let snap = to_snapshot(&msg.fragment, now);
            if let Some(latest) = self.latest.as_mut() {
                latest
                    .binary
                    .extend(snap.binary.iter().map(|(k, v)| (*k, *v)));
            }
            return Ok(MasterEvent::Unsolicited(snap));
        }
        let (stage, seq, _) = self.in_flight.ok_or(ScadaError::UnexpectedResponse)?;
        let frag = &msg.fragment;
        if msg.header.source != self.config.outstation_address
            || msg.header.destination != self.config.master_address
            || frag.function != FunctionCode::SolicitedResponse
            || frag.control.seq != seq
        {
            return Err(ScadaError::UnexpectedResponse);
        }
        self.in_flight = None;
        match stage {
            Stage::Read => {
                let snap = to_snapshot(frag, now);
                self.latest = Some(snap.clone());
                Ok(MasterEvent::Snapshot(snap))
            }
            Stage::Select(command) => {
                let status = echo_status(frag, command.index);
                if status == CommandStatus::Success {
                    self.queue.push_front(Stage::Operate(command));
                    Ok(MasterEvent::Selected(command))
                } else {
                    Ok(MasterEvent::CommandDone { command, status })
                }
            }
            Stage::Operate(command) | Stage::Direct(command) => Ok(MasterEvent::CommandDone {
                command,
                status: echo_status(frag, command.index),
            }),
        }
    }
}

fn to_snapshot(frag: &AppFragment, now: f64) -> Snapshot {
    let mut snap = Snapshot {
        time: now,
        ..Snapshot::default()
    };
    for (_, index, value) in frag.points() {
        match *value {
            PointValue::Binary(b) => {
                snap.binary.insert(index, b);
            }
            PointValue::Analog(v) => {
                snap.analog.insert(index, v);
            }
            _ => {}
        }
    }
    snap
}

fn command_fragment(seq: u8, function: FunctionCode, c: Command) -> AppFragment {
    let (kind, value) = match c.value {
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
    AppFragment::request(
        seq,
        function,
        vec![PointGroup {
            kind,
            points: vec![(c.index, value)],
        }],
    )
}

fn echo_status(frag: &AppFragment, index: u16) -> CommandStatus {
    frag.points()
        .find(|(kind, i, _)| kind.is_output() && *i == index)
        .and_then(|(_, _, v)| v.status())
        .unwrap_or(CommandStatus::FormatError)
}

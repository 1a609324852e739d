use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::Ipv4Addr;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::attack::{
    Adversary, AdversaryStats, DosSpec, DosTarget, PacketClass, UseCase, FORWARD_TIMER,
    SERVICE_TIMER,
};
use crate::grid::{BranchId, ControlAction, GridSim};
use crate::ids::{alert_histogram, write_alerts_csv, AlertRecord, Ids};
use crate::netsim::{
    master_name, outstation_name, ConnId, EventRecord, Handler, NetConfig, NetEvent, Network,
    NodeId, SimTime, ATTACKER, DNP3_PORT,
};
use crate::scada::{
    AutomationMode, Command, Latch, Master, MasterEvent, Outstation, OutstationConfig, PointMap,
    Snapshot,
};

use super::config::{Scenario, ScenarioConfig};
use super::HarnessError;

const T_POLL: u64 = 1 << 32;
const T_ROUTINE: u64 = 2 << 32;
const T_GRID: u64 = 3 << 32;
const T_ATTACK: u64 = 4 << 32;
const T_RECONNECT: u64 = 5 << 32;
const T_TIMEOUT: u64 = 6 << 32;
const KIND_MASK: u64 = !0xFFFF_FFFF;

/// Network seconds a master waits before reconnecting after a failure.
const RECONNECT_DELAY_S: f64 = 0.5;

/// Transport metrics for one window; times in scenario seconds, rates per
/// network second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub start_s: f64,
    pub end_s: f64,
    pub throughput_bps: f64,
    pub goodput_bps: f64,
    pub total_bytes: u64,
    pub retransmitted_bytes: u64,
    pub retransmissions: u64,
    pub rtt_samples: usize,
    pub mean_rtt_ms: Option<f64>,
    pub active_flows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverloadEvent {
    pub time: f64,
    pub branches: Vec<BranchId>,
}

/// A control an outstation applied to the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutedControl {
    pub time: f64,
    pub outstation: String,
    pub action: ControlAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub use_case: UseCase,
    pub stats: AdversaryStats,
    pub miss_rate: f64,
    /// Command mutations tried up to the first overload (or the run end).
    pub fci_attempts_to_overload: u64,
    /// Measurement mutations tried up to the first overload (or the run end).
    pub fdi_attempts_to_overload: u64,
    pub mean_probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosSummary {
    pub target: DosTarget,
    pub payload_size: usize,
    pub interval_ms: f64,
    pub requests_sent: u64,
    pub replies: u64,
    /// DNP3 round-trip times before and during the flood, network ms.
    pub rtt_before_ms: Option<f64>,
    pub rtt_during_ms: Option<f64>,
    pub throughput_during_bps: f64,
    pub goodput_during_bps: f64,
    pub retransmissions_during: u64,
}

/// Everything a run produced, plus the resolved configuration so the run
/// can be repeated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub config: ScenarioConfig,
    pub duration_s: f64,
    pub time_compression: f64,
    pub time_to_overload_s: Option<f64>,
    pub overloads: Vec<OverloadEvent>,
    pub overloaded_branches: Vec<BranchId>,
    pub executed: Vec<ExecutedControl>,
    pub polls: u64,
    pub snapshots: u64,
    /// Snapshots that differed from the grid state the outstation read.
    pub snapshot_mismatches: u64,
    pub commands_enqueued: u64,
    pub commands_done: u64,
    pub response_timeouts: u64,
    pub reconnects: u64,
    pub retransmissions: u64,
    pub mean_rtt_ms: Option<f64>,
    pub throughput_bps: f64,
    pub goodput_bps: f64,
    pub source_ports: BTreeMap<String, Vec<u16>>,
    pub flow_series: Vec<(f64, usize)>,
    pub alert_counts: BTreeMap<String, usize>,
    /// (kind, bucket start in scenario seconds, count), 10 s buckets.
    pub alert_histogram: Vec<(String, f64, usize)>,
    pub attack: Option<AttackSummary>,
    pub dos: Option<DosSummary>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub events: Vec<EventRecord>,
    pub alerts: Vec<AlertRecord>,
    pub windows: Vec<WindowMetrics>,
}

struct MasterSlot {
    node: NodeId,
    name: String,
    master: Master,
    conn: Option<ConnId>,
    target: Ipv4Addr,
    next_poll: u64,
    latch: Latch,
}

struct OutstationSlot {
    node: NodeId,
    name: String,
    outstation: Outstation,
    truth: Option<Snapshot>,
}

struct Sim<'a> {
    scenario: &'a Scenario,
    scale: f64,
    grid: GridSim,
    grid_time: f64,
    masters: Vec<MasterSlot>,
    outstations: Vec<OutstationSlot>,
    adversary: Option<Adversary>,
    attacker: NodeId,
    engage_pairs: Vec<(Ipv4Addr, Ipv4Addr)>,
    ids: Ids,
    jitter: ChaCha8Rng,
    overload_now: BTreeSet<BranchId>,
    overloads: Vec<OverloadEvent>,
    ever_overloaded: BTreeSet<BranchId>,
    executed: Vec<ExecutedControl>,
    routine_next: u64,
    polls: u64,
    snapshots: u64,
    mismatches: u64,
    commands_enqueued: u64,
    commands_done: u64,
    timeouts: u64,
    reconnects: u64,
}

fn net_time(scenario_s: f64, scale: f64) -> SimTime {
    SimTime::from_secs_f64(scenario_s / scale)
}

impl<'a> Sim<'a> {
    fn cfg(&self) -> &'a ScenarioConfig {
        &self.scenario.config
    }

    fn now_s(&self, net: &Network) -> f64 {
        net.now().as_secs_f64() * self.scale
    }

    fn record(&self, net: &mut Network, kind: &str, node: &str, detail: serde_json::Value) {
        if net.log_enabled() {
            let mut rec = EventRecord::new(net.now(), kind, node);
            rec.detail = Some(detail);
            net.record(rec);
        }
    }

    fn advance_grid(&mut self, net: &mut Network) {
        let t = self.now_s(net);
        let dt = t - self.grid_time;
        if dt > 1e-9 {
            self.grid.step(dt).expect("positive step");
            self.grid_time = t;
        }
        self.check_overload(net);
    }

    fn check_overload(&mut self, net: &mut Network) {
        let now: BTreeSet<BranchId> = self
            .grid
            .overloads()
            .entries
            .iter()
            .map(|e| e.branch)
            .collect();
        if now != self.overload_now {
            let t = self.now_s(net);
            self.ever_overloaded.extend(now.iter().copied());
            let branches: Vec<BranchId> = now.iter().copied().collect();
            self.record(
                net,
                "overload",
                "grid",
                json!({ "scenario_t": t, "branches": branches }),
            );
            self.overloads.push(OverloadEvent { time: t, branches });
            self.overload_now = now;
        }
    }

    fn truth(&self) -> Snapshot {
        let state = self.grid.state();
        let map: &PointMap = &self.scenario.map;
        Snapshot {
            time: 0.0,
            binary: map
                .binary_inputs
                .iter()
                .map(|p| (p.index, state.status(p.device)))
                .collect(),
            analog: map
                .analog_inputs
                .iter()
                .map(|p| (p.index, PointMap::analog_value(state, p.source)))
                .collect(),
        }
    }

    fn schedule_poll(&mut self, net: &mut Network, i: usize) {
        let cfg = self.cfg();
        let k = self.masters[i].next_poll;
        self.masters[i].next_poll += 1;
        let t = k as f64 * cfg.master.poll_interval_s;
        if t >= cfg.duration_s {
            return;
        }
        let jitter = cfg.master.poll_jitter_s;
        let j = if jitter > 0.0 {
            self.jitter.gen_range(0.0..jitter)
        } else {
            0.0
        };
        let at = net_time(t, self.scale) + SimTime::from_secs_f64(j);
        net.schedule_timer(self.masters[i].node, at.max(net.now()), T_POLL | i as u64);
    }

    fn schedule_routine(&mut self, net: &mut Network) {
        let Some(r) = &self.cfg().routine else { return };
        let t = r.offset_s + self.routine_next as f64 * r.period_s;
        self.routine_next += 1;
        if t < self.cfg().duration_s {
            let at = net_time(t, self.scale).max(net.now());
            net.schedule_timer(self.masters[0].node, at, T_ROUTINE);
        }
    }

    fn connect(&mut self, net: &mut Network, i: usize) {
        let slot = &mut self.masters[i];
        match net.connect(slot.node, slot.target, DNP3_PORT) {
            Ok(conn) => slot.conn = Some(conn),
            Err(e) => {
                let name = slot.name.clone();
                self.record(net, "connect_error", &name, json!(e.to_string()));
                let at = net.now() + SimTime::from_secs_f64(RECONNECT_DELAY_S);
                net.schedule_timer(self.masters[i].node, at, T_RECONNECT | i as u64);
            }
        }
    }

    fn pump(&mut self, net: &mut Network, i: usize) {
        let now = net.now().as_secs_f64();
        let slot = &mut self.masters[i];
        let Some(conn) = slot.conn else { return };
        if net.conn_info(conn).state != crate::netsim::ConnState::Established {
            return;
        }
        if let Some(req) = slot.master.next_request(now) {
            if net.send(conn, req).is_err() {
                slot.master.requeue_in_flight();
                return;
            }
            let at = net.now() + SimTime::from_secs_f64(slot.master.config().response_timeout_s);
            net.schedule_timer(slot.node, at, T_TIMEOUT | i as u64);
        }
    }

    fn enqueue(&mut self, i: usize, commands: Vec<Command>) {
        self.commands_enqueued += commands.len() as u64;
        for c in commands {
            self.masters[i].master.enqueue_command(c);
        }
    }

    fn on_timer(&mut self, net: &mut Network, node: NodeId, token: u64) {
        if node == self.attacker && (token == SERVICE_TIMER || token == FORWARD_TIMER) {
            if let Some(a) = self.adversary.as_mut() {
                a.on_timer(net, token);
            }
            return;
        }
        let i = (token & 0xFFFF_FFFF) as usize;
        match token & KIND_MASK {
            T_POLL => {
                self.polls += 1;
                self.masters[i].master.enqueue_poll();
                self.pump(net, i);
                self.schedule_poll(net, i);
            }
            T_ROUTINE => {
                if let Some(r) = &self.cfg().routine {
                    let model = self.grid.model();
                    let map = &self.scenario.map;
                    let mut cmds = Vec::new();
                    for g in &r.setpoints {
                        let nominal = self
                            .scenario
                            .grid
                            .generator(*g)
                            .map_or(0.0, |g| g.setpoint_mw);
                        if let Some(ao) = map.setpoint_index(*g) {
                            cmds.push(Command::setpoint(ao, nominal));
                        }
                    }
                    for b in &r.breakers {
                        if let (Some(bo), Some(_)) = (map.breaker_index(*b), model.branch(*b)) {
                            cmds.push(Command::control(bo, crate::dnp3::ControlCode::Close));
                        }
                    }
                    let t = self.now_s(net);
                    self.record(
                        net,
                        "routine",
                        "operator",
                        json!({ "scenario_t": t, "commands": cmds }),
                    );
                    for m in 0..self.masters.len() {
                        self.enqueue(m, cmds.clone());
                        self.pump(net, m);
                    }
                }
                self.schedule_routine(net);
            }
            T_GRID => {
                self.advance_grid(net);
                let next = self.grid_time + self.cfg().grid_step_s;
                if next < self.cfg().duration_s {
                    net.schedule_timer(node, net_time(next, self.scale).max(net.now()), T_GRID);
                }
            }
            T_ATTACK => {
                let pairs = self.engage_pairs.clone();
                if let Some(a) = self.adversary.as_mut() {
                    if let Err(e) = a.engage(net, &pairs) {
                        self.record(net, "attack_error", ATTACKER, json!(e.to_string()));
                    }
                }
            }
            T_RECONNECT => self.connect(net, i),
            T_TIMEOUT => {
                let now = net.now().as_secs_f64();
                if self.masters[i].master.check_timeout(now).is_err() {
                    self.timeouts += 1;
                    let name = self.masters[i].name.clone();
                    self.record(net, "response_timeout", &name, json!(null));
                    self.pump(net, i);
                }
            }
            _ => {}
        }
    }

    fn master_data(&mut self, net: &mut Network, i: usize, payload: &[u8]) {
        let now = net.now().as_secs_f64();
        let name = self.masters[i].name.clone();
        match self.masters[i].master.on_message(payload, now) {
            Ok(MasterEvent::Snapshot(snap)) => {
                self.snapshots += 1;
                let truth = self.outstations.get(i).and_then(|o| o.truth.as_ref());
                let matches =
                    truth.is_some_and(|t| t.binary == snap.binary && t.analog == snap.analog);
                if !matches {
                    self.mismatches += 1;
                }
                let t = self.now_s(net);
                self.record(
                    net,
                    "snapshot",
                    &name,
                    json!({ "scenario_t": t, "matches_grid": matches, "analog": snap.analog, "binary": snap.binary }),
                );
                if let Some(policy) = &self.cfg().automation {
                    let mut cmds = policy.evaluate(&snap, &self.scenario.map, &self.scenario.grid);
                    if policy.mode == AutomationMode::Latch {
                        cmds = self.masters[i].latch.filter(cmds);
                    }
                    if !cmds.is_empty() {
                        self.record(
                            net,
                            "automation",
                            &name,
                            json!({ "scenario_t": t, "commands": cmds }),
                        );
                        self.enqueue(i, cmds);
                    }
                }
            }
            Ok(MasterEvent::CommandDone { command, status }) => {
                self.commands_done += 1;
                self.record(
                    net,
                    "command_done",
                    &name,
                    json!({ "command": command, "status": format!("{status:?}") }),
                );
            }
            Ok(MasterEvent::Selected(_)) => {}
            Ok(MasterEvent::Unsolicited(snap)) => {
                self.record(net, "unsolicited", &name, json!({ "binary": snap.binary }));
            }
            Err(e) => self.record(net, "master_error", &name, json!(e.to_string())),
        }
        self.pump(net, i);
    }

    fn outstation_data(&mut self, net: &mut Network, conn: ConnId, k: usize, payload: &[u8]) {
        self.advance_grid(net);
        let now = net.now().as_secs_f64();
        let name = self.outstations[k].name.clone();
        let served = self.outstations[k]
            .outstation
            .serve(&mut self.grid, payload, now);
        match served {
            Ok(Some(served)) => {
                if matches!(
                    served.function,
                    crate::dnp3::FunctionCode::Read | crate::dnp3::FunctionCode::Read2
                ) {
                    let truth = self.truth();
                    if net.log_enabled() {
                        let flows = &self.grid.state().flows;
                        self.record(
                            net,
                            "grid",
                            &name,
                            json!({ "scenario_t": self.now_s(net), "flows": flows }),
                        );
                    }
                    self.outstations[k].truth = Some(truth);
                }
                let t = self.now_s(net);
                for action in &served.actions {
                    self.record(
                        net,
                        "control",
                        &name,
                        json!({ "scenario_t": t, "action": action }),
                    );
                    self.executed.push(ExecutedControl {
                        time: t,
                        outstation: name.clone(),
                        action: *action,
                    });
                }
                let _ = net.send(conn, served.response);
                if let Some(u) = served.unsolicited {
                    let _ = net.send(conn, u);
                }
                self.check_overload(net);
            }
            Ok(None) => {}
            Err(e) => self.record(net, "outstation_error", &name, json!(e.to_string())),
        }
    }
}

impl Handler for Sim<'_> {
    fn on_event(&mut self, net: &mut Network, event: NetEvent) {
        match event {
            NetEvent::Timer { node, token } => self.on_timer(net, node, token),
            NetEvent::Connected { conn } => {
                if let Some(i) = self.masters.iter().position(|m| m.conn == Some(conn)) {
                    self.pump(net, i);
                }
            }
            NetEvent::Accepted { .. } => {}
            NetEvent::ConnectionFailed { conn } => {
                if let Some(i) = self.masters.iter().position(|m| m.conn == Some(conn)) {
                    self.reconnects += 1;
                    let slot = &mut self.masters[i];
                    slot.conn = None;
                    slot.master.requeue_in_flight();
                    let at = net.now() + SimTime::from_secs_f64(RECONNECT_DELAY_S);
                    net.schedule_timer(slot.node, at, T_RECONNECT | i as u64);
                }
            }
            NetEvent::Data { conn, payload } => {
                let info = net.conn_info(conn);
                if info.client {
                    if let Some(i) = self.masters.iter().position(|m| m.conn == Some(conn)) {
                        self.master_data(net, i, &payload);
                    }
                } else if let Some(k) = self.outstations.iter().position(|o| o.node == info.node) {
                    self.outstation_data(net, conn, k, &payload);
                }
            }
            NetEvent::Intercepted { node, frame } => {
                if node == self.attacker {
                    if let Some(a) = self.adversary.as_mut() {
                        a.on_intercept(net, frame);
                    }
                }
            }
            NetEvent::Tap { node, frame } => {
                let t = net.now().as_secs_f64();
                let sensor = net.node_name(node).to_string();
                self.ids.inspect(t, &sensor, &frame);
            }
        }
    }
}

fn node(net: &Network, name: &str) -> Result<NodeId, HarnessError> {
    net.node_id(name).ok_or_else(|| {
        crate::netsim::NetError::InvalidTopology(format!("missing node {name}")).into()
    })
}

fn rtt_ms(m: &crate::netsim::Measurement) -> Option<f64> {
    m.mean_rtt_s().map(|s| s * 1000.0)
}

/// Runs one scenario to completion.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput, HarnessError> {
    let cfg = &scenario.config;
    let scale = cfg.time_compression;
    let mut net = Network::new(
        &scenario.topology,
        NetConfig {
            seed: cfg.seed,
            tcp: cfg.tcp,
            monitor_port: DNP3_PORT,
            log_level: cfg.log_level,
        },
    )?;
    let attacker = node(&net, ATTACKER)?;

    let mut masters = Vec::new();
    let mut outstations = Vec::new();
    let mut engage_pairs = Vec::new();
    for i in 0..cfg.masters {
        let m = node(&net, &master_name(i))?;
        let o = node(&net, &outstation_name(i))?;
        let mcfg = cfg.master_config(i);
        let ocfg = OutstationConfig {
            address: mcfg.outstation_address,
            master_address: mcfg.master_address,
            ..OutstationConfig::default()
        };
        let target = net.node_ip(o);
        let (_, gateway) = net.route(o, net.node_ip(m))?;
        engage_pairs.push((gateway, target));
        net.listen(o, DNP3_PORT);
        masters.push(MasterSlot {
            node: m,
            name: master_name(i),
            master: Master::new(mcfg)?,
            conn: None,
            target,
            next_poll: 0,
            latch: Latch::default(),
        });
        outstations.push(OutstationSlot {
            node: o,
            name: outstation_name(i),
            outstation: Outstation::new(ocfg, scenario.map.clone()),
            truth: None,
        });
    }

    let adversary = match &cfg.attack {
        Some(a) => Some(Adversary::new(
            attacker,
            a.policy.clone(),
            &scenario.map,
            cfg.seed ^ 0xA77A_C4ED,
            scale,
        )?),
        None => None,
    };
    let ids = Ids::new(&scenario.ruleset, net.true_bindings(), scale)?;

    let mut sim = Sim {
        scenario,
        scale,
        grid: GridSim::new(scenario.grid.clone()).map_err(crate::scada::ScadaError::from)?,
        grid_time: 0.0,
        masters,
        outstations,
        adversary,
        attacker,
        engage_pairs,
        ids,
        jitter: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0005_EED5),
        overload_now: BTreeSet::new(),
        overloads: Vec::new(),
        ever_overloaded: BTreeSet::new(),
        executed: Vec::new(),
        routine_next: 0,
        polls: 0,
        snapshots: 0,
        mismatches: 0,
        commands_enqueued: 0,
        commands_done: 0,
        timeouts: 0,
        reconnects: 0,
    };

    for i in 0..cfg.masters {
        sim.connect(&mut net, i);
        sim.schedule_poll(&mut net, i);
    }
    sim.schedule_routine(&mut net);
    net.schedule_timer(
        sim.masters[0].node,
        net_time(cfg.grid_step_s, scale),
        T_GRID,
    );
    if let Some(a) = &cfg.attack {
        net.schedule_timer(attacker, net_time(a.start_s, scale), T_ATTACK);
    }
    let mut flood = None;
    if let Some(d) = &cfg.dos {
        flood = crate::attack::dos_run(
            &mut net,
            attacker,
            &DosSpec {
                target: d.target,
                payload_size: d.payload_size,
                interval_s: d.network_interval_s(),
                start_s: d.start_s / scale,
                duration_s: d.duration_s / scale,
                arrivals: d.arrivals,
            },
        )?;
    }

    let end = net_time(cfg.duration_s, scale);
    net.advance_with(end, &mut sim);
    sim.advance_grid(&mut net);

    let mut windows = Vec::new();
    let mut w0 = 0.0;
    while w0 < cfg.duration_s - 1e-9 {
        let w1 = (w0 + cfg.metrics_window_s).min(cfg.duration_s);
        let m = net.measure(net_time(w0, scale), net_time(w1, scale));
        windows.push(WindowMetrics {
            start_s: w0,
            end_s: w1,
            throughput_bps: m.sample.throughput,
            goodput_bps: m.sample.goodput,
            total_bytes: m.sample.total_payload_bytes,
            retransmitted_bytes: m.sample.retransmitted_bytes,
            retransmissions: m.retransmissions,
            rtt_samples: m.rtts.len(),
            mean_rtt_ms: rtt_ms(&m),
            active_flows: net.flows().active_at(net_time(w1, scale)),
        });
        w0 = w1;
    }
    let whole = net.measure(SimTime::ZERO, end);

    let time_to_overload_s = sim
        .overloads
        .iter()
        .find(|o| !o.branches.is_empty())
        .map(|o| o.time);
    let attack = sim.adversary.as_ref().map(|a| {
        let horizon = time_to_overload_s.unwrap_or(f64::INFINITY);
        let upto: Vec<_> = a
            .records()
            .iter()
            .filter(|r| r.attempted && r.time <= horizon)
            .collect();
        let fci = upto.iter().filter(|r| r.class.is_command()).count() as u64;
        let fdi = upto.iter().filter(|r| r.class == PacketClass::Rr).count() as u64;
        let probs: Vec<f64> = a
            .records()
            .iter()
            .filter(|r| r.attempted && r.detail.is_none())
            .map(|r| r.probability)
            .collect();
        AttackSummary {
            use_case: a.mutator().policy().use_case,
            stats: a.stats(),
            miss_rate: a.stats().miss_rate(),
            fci_attempts_to_overload: fci,
            fdi_attempts_to_overload: fdi,
            mean_probability: (!probs.is_empty())
                .then(|| probs.iter().sum::<f64>() / probs.len() as f64),
        }
    });
    let dos = match (&cfg.dos, flood) {
        (Some(d), flood) => {
            let (sent, replies) = flood.map_or((0, 0), |f| net.flood_counts(f));
            let start = net_time(d.start_s, scale);
            let stop = net_time((d.start_s + d.duration_s).min(cfg.duration_s), scale);
            let before = net.measure(SimTime::ZERO, start);
            let during = net.measure(start, stop);
            Some(DosSummary {
                target: d.target,
                payload_size: d.payload_size,
                interval_ms: d.interval_ms,
                requests_sent: sent,
                replies,
                rtt_before_ms: rtt_ms(&before),
                rtt_during_ms: rtt_ms(&during),
                throughput_during_bps: during.sample.throughput,
                goodput_during_bps: during.sample.goodput,
                retransmissions_during: during.retransmissions,
            })
        }
        (None, _) => None,
    };

    let mut source_ports = BTreeMap::new();
    for m in &sim.masters {
        let ip = net.node_ip(m.node);
        source_ports.insert(
            m.name.clone(),
            net.flows().source_ports(ip, m.target, DNP3_PORT),
        );
    }
    let flow_series = net
        .flows()
        .series
        .iter()
        .map(|(t, n)| (t.as_secs_f64() * scale, *n))
        .collect();

    let events = net.take_log();
    let alerts = sim.ids.into_alerts();
    let mut alert_counts = BTreeMap::new();
    for a in &alerts {
        *alert_counts.entry(a.kind.label().to_string()).or_insert(0) += 1;
    }
    let histogram = alert_histogram(&alerts, 10.0)?
        .into_iter()
        .map(|((kind, bucket), n)| (kind.label().to_string(), bucket as f64 * 10.0, n))
        .collect();

    let report = RunReport {
        scenario: cfg.id.label().to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        duration_s: cfg.duration_s,
        time_compression: scale,
        time_to_overload_s,
        overloaded_branches: sim.ever_overloaded.iter().copied().collect(),
        overloads: sim.overloads,
        executed: sim.executed,
        polls: sim.polls,
        snapshots: sim.snapshots,
        snapshot_mismatches: sim.mismatches,
        commands_enqueued: sim.commands_enqueued,
        commands_done: sim.commands_done,
        response_timeouts: sim.timeouts,
        reconnects: sim.reconnects,
        retransmissions: whole.retransmissions,
        mean_rtt_ms: rtt_ms(&whole),
        throughput_bps: whole.sample.throughput,
        goodput_bps: whole.sample.goodput,
        source_ports,
        flow_series,
        alert_counts,
        alert_histogram: histogram,
        attack,
        dos,
    };
    Ok(RunOutput {
        report,
        events,
        alerts,
        windows,
    })
}

impl RunReport {
    /// Overload state of the final grid, re-derived from the report's own
    /// event list.
    pub fn overloaded_at_end(&self) -> bool {
        self.overloads
            .last()
            .is_some_and(|o| !o.branches.is_empty())
    }
}

/// Writes `events.jsonl`, `metrics.csv`, `alerts.csv` and `report.json`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let create = |name: &str| {
        let p = dir.join(name);
        File::create(&p)
            .map(BufWriter::new)
            .map_err(|e| HarnessError::io(&p, e))
    };

    let mut ev = create("events.jsonl")?;
    for rec in &out.events {
        serde_json::to_writer(&mut ev, rec)
            .map_err(|e| HarnessError::io(&dir.join("events.jsonl"), e))?;
        ev.write_all(b"\n")
            .map_err(|e| HarnessError::io(&dir.join("events.jsonl"), e))?;
    }
    ev.flush()
        .map_err(|e| HarnessError::io(&dir.join("events.jsonl"), e))?;

    let mut w = csv::Writer::from_writer(create("metrics.csv")?);
    for row in &out.windows {
        w.serialize(row)
            .map_err(|e| HarnessError::io(&dir.join("metrics.csv"), e))?;
    }
    w.flush()
        .map_err(|e| HarnessError::io(&dir.join("metrics.csv"), e))?;

    write_alerts_csv(create("alerts.csv")?, &out.alerts)?;

    let rp = dir.join("report.json");
    let f = create("report.json")?;
    serde_json::to_writer_pretty(f, &out.report).map_err(|e| HarnessError::io(&rp, e))?;
    Ok(())
}

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dnp3::{
    decode_message, encode_message, AppFragment, ControlCode, FunctionCode, Message, PointKind,
    PointValue, BLOCK_LEN, HEADER_LEN,
};
use crate::grid::{DeviceId, GenId};
use crate::netsim::{EventRecord, Frame, NetError, Network, NodeId, Packet, SimTime, DNP3_PORT};
use crate::scada::PointMap;

use super::{AttackError, AttackPolicy, PacketClass, UseCase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointChange {
    pub index: u16,
    pub before: PointValue,
    pub after: PointValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationRecord {
    pub time: f64,
    pub class: PacketClass,
    pub attempted: bool,
    pub succeeded: bool,
    /// Success probability used for the roll, after load coupling.
    pub probability: f64,
    pub changes: Vec<PointChange>,
    pub crc_recomputed: bool,
    pub seq_preserved: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tcp_seq: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Measurement or command class of a decoded fragment.
pub fn classify(fragment: &AppFragment) -> PacketClass {
    let has = |k: PointKind| fragment.objects.iter().any(|g| g.kind == k);
    if fragment.function.is_control() {
        if has(PointKind::BinaryOutputCommand) {
            return PacketClass::Bo;
        }
        if has(PointKind::AnalogOutputCommand) {
            return PacketClass::Ao;
        }
    }
    if fragment.function == FunctionCode::SolicitedResponse && has(PointKind::AnalogInput) {
        return PacketClass::Rr;
    }
    PacketClass::Other
}

/// Classifies a TCP payload, if it decodes as DNP3.
pub fn classify_payload(payload: &[u8]) -> Option<PacketClass> {
    decode_message(payload).ok().map(|m| classify(&m.fragment))
}

/// Target devices translated to point indices.
#[derive(Debug, Clone, Default)]
struct ResolvedTargets {
    breakers: BTreeSet<u16>,
    setpoints: BTreeMap<u16, GenId>,
    gen_readings: BTreeMap<u16, GenId>,
    flow_readings: BTreeSet<u16>,
}

impl ResolvedTargets {
    fn new(policy: &AttackPolicy, map: &PointMap) -> Result<Self, AttackError> {
        let mut t = ResolvedTargets::default();
        for &b in &policy.targets.breakers {
            let i = map
                .breaker_index(b)
                .ok_or(AttackError::UnmappedTarget(DeviceId::Branch(b)))?;
            t.breakers.insert(i);
        }
        for &g in &policy.targets.generators {
            let unmapped = AttackError::UnmappedTarget(DeviceId::Generator(g));
            let ao = map.setpoint_index(g).ok_or(unmapped.clone())?;
            let ai = map.gen_reading_index(g).ok_or(unmapped)?;
            t.setpoints.insert(ao, g);
            t.gen_readings.insert(ai, g);
        }
        for &b in &policy.targets.flows {
            let i = map
                .flow_reading_index(b)
                .ok_or(AttackError::UnmappedTarget(DeviceId::Branch(b)))?;
            t.flow_readings.insert(i);
        }
        Ok(t)
    }
}

/// Replaces targeted generator readings with the last setpoint the
/// operator was seen to command. `None` when nothing was observed yet or
/// the fragment carries no targeted reading.
pub fn mitm_mask(
    fragment: &AppFragment,
    readings: &BTreeMap<u16, GenId>,
    observed: &BTreeMap<GenId, f64>,
) -> Option<(AppFragment, Vec<PointChange>)> {
    if observed.is_empty() {
        return None;
    }
    rewrite(fragment, |kind, index, v| match (kind, v) {
        (PointKind::AnalogInput, PointValue::Analog(_)) => readings
            .get(&index)
            .and_then(|g| observed.get(g))
            .map(|&mw| PointValue::Analog(mw)),
        _ => None,
    })
}

/// Applies `f` to every point; returns the new fragment and the changes
/// when at least one point was rewritten.
fn rewrite(
    fragment: &AppFragment,
    mut f: impl FnMut(PointKind, u16, PointValue) -> Option<PointValue>,
) -> Option<(AppFragment, Vec<PointChange>)> {
    let mut out = fragment.clone();
    let mut changes = Vec::new();
    for g in out.objects.iter_mut() {
        for (index, v) in g.points.iter_mut() {
            if let Some(after) = f(g.kind, *index, *v) {
                changes.push(PointChange {
                    index: *index,
                    before: *v,
                    after,
                });
                *v = after;
            }
        }
    }
    (!changes.is_empty()).then_some((out, changes))
}

/// Decision for one intercepted DNP3 payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub class: PacketClass,
    /// Whether the use case wanted to rewrite this packet.
    pub targeted: bool,
    /// Octets to forward; `None` drops the packet.
    pub forward: Option<Vec<u8>>,
    pub record: Option<MutationRecord>,
}

/// The rewriting logic of the in-path adversary, without any queueing.
#[derive(Debug, Clone)]
pub struct Mutator {
    policy: AttackPolicy,
    targets: ResolvedTargets,
    observed: BTreeMap<GenId, f64>,
    fdi_done: bool,
    masking: bool,
}

impl Mutator {
    pub fn new(policy: AttackPolicy, map: &PointMap) -> Result<Self, AttackError> {
        policy.validate()?;
        let targets = ResolvedTargets::new(&policy, map)?;
        Ok(Self {
            policy,
            targets,
            observed: BTreeMap::new(),
            fdi_done: false,
            masking: false,
        })
    }

    pub fn policy(&self) -> &AttackPolicy {
        &self.policy
    }

    /// Setpoints seen in operator commands, by generator.
    pub fn observed_setpoints(&self) -> &BTreeMap<GenId, f64> {
        &self.observed
    }

    pub fn masking(&self) -> bool {
        self.masking
    }

    fn plan(&self, msg: &Message, class: PacketClass) -> Option<(AppFragment, Vec<PointChange>)> {
        let uc = self.policy.use_case;
        let t = &self.targets;
        let frag = &msg.fragment;
        match class {
            PacketClass::Bo => {
                let active = match uc {
                    UseCase::Uc1 | UseCase::Uc2 => true,
                    UseCase::Uc3 => false,
                    UseCase::Uc4 => self.masking,
                };
                if !active {
                    return None;
                }
                rewrite(frag, |kind, index, v| match v {
                    PointValue::Control { code, status }
                        if kind == PointKind::BinaryOutputCommand
                            && t.breakers.contains(&index)
                            && code.closes() =>
                    {
                        let code = match code {
                            ControlCode::LatchOn => ControlCode::LatchOff,
                            _ => ControlCode::Trip,
                        };
                        Some(PointValue::Control { code, status })
                    }
                    _ => None,
                })
            }
            PacketClass::Ao => {
                let active = match uc {
                    UseCase::Uc1 => false,
                    UseCase::Uc2 | UseCase::Uc3 => true,
                    UseCase::Uc4 => self.fdi_done,
                };
                if !active {
                    return None;
                }
                let forced = self.policy.forced_setpoint();
                rewrite(frag, |kind, index, v| match v {
                    PointValue::Setpoint { status, .. }
                        if kind == PointKind::AnalogOutputCommand
                            && t.setpoints.contains_key(&index) =>
                    {
                        Some(PointValue::Setpoint {
                            value: forced,
                            status,
                        })
                    }
                    _ => None,
                })
            }
            PacketClass::Rr => match uc {
                UseCase::Uc1 | UseCase::Uc2 => None,
                UseCase::Uc3 => rewrite(frag, |kind, index, v| {
                    if kind != PointKind::AnalogInput || !matches!(v, PointValue::Analog(_)) {
                        return None;
                    }
                    if t.gen_readings.contains_key(&index) {
                        Some(PointValue::Analog(self.policy.fdi_gen_reading_mw))
                    } else if t.flow_readings.contains(&index) {
                        Some(PointValue::Analog(self.policy.fdi_flow_reading_mw))
                    } else {
                        None
                    }
                }),
                UseCase::Uc4 => mitm_mask(frag, &t.gen_readings, &self.observed).or_else(|| {
                    rewrite(frag, |kind, index, v| match (kind, v) {
                        (PointKind::AnalogInput, PointValue::Analog(_))
                            if t.gen_readings.contains_key(&index) =>
                        {
                            Some(PointValue::Analog(self.policy.fdi_gen_reading_mw))
                        }
                        _ => None,
                    })
                }),
            },
            PacketClass::Other => None,
        }
    }

    fn commit(&mut self, class: PacketClass, changes: &[PointChange]) {
        match class {
            PacketClass::Ao if self.policy.use_case == UseCase::Uc4 => {
                for c in changes {
                    if let (PointValue::Setpoint { value, .. }, Some(&g)) =
                        (c.before, self.targets.setpoints.get(&c.index))
                    {
                        self.observed.insert(g, value);
                    }
                }
            }
            PacketClass::Rr => {
                self.fdi_done = true;
                if self.policy.use_case == UseCase::Uc4 && !self.observed.is_empty() {
                    self.masking = true;
                }
            }
            _ => {}
        }
    }

    /// Classifies, rolls and rewrites one payload. `rho` is the current
    /// traffic-intensity estimate at the adversary.
    pub fn process(&mut self, now: f64, payload: &[u8], rho: f64, rng: &mut impl Rng) -> Decision {
        let msg = match decode_message(payload) {
            Ok(m) => m,
            Err(e) => {
                return Decision {
                    class: PacketClass::Other,
                    targeted: false,
                    forward: Some(payload.to_vec()),
                    record: Some(MutationRecord {
                        time: now,
                        class: PacketClass::Other,
                        attempted: false,
                        succeeded: false,
                        probability: 0.0,
                        changes: vec![],
                        crc_recomputed: false,
                        seq_preserved: true,
                        tcp_seq: None,
                        detail: Some(format!("undecodable: {e}")),
                    }),
                }
            }
        };
        let class = classify(&msg.fragment);
        let Some((fragment, changes)) = self.plan(&msg, class) else {
            return Decision {
                class,
                targeted: false,
                forward: Some(payload.to_vec()),
                record: None,
            };
        };
        let probability = self.effective_probability(class, rho);
        let succeeded = rng.gen_bool(probability);
        let mut record = MutationRecord {
            time: now,
            class,
            attempted: true,
            succeeded,
            probability,
            changes: changes.clone(),
            crc_recomputed: false,
            seq_preserved: true,
            tcp_seq: None,
            detail: None,
        };
        if !succeeded {
            record.changes.clear();
            return Decision {
                class,
                targeted: true,
                forward: None,
                record: Some(record),
            };
        }
        self.commit(class, &changes);
        let mutated = Message { fragment, ..msg };
        let mut octets = encode_message(&mutated).expect("rewrites keep the frame size");
        if self.policy.skip_crc {
            restore_crcs(payload, &mut octets);
        } else {
            record.crc_recomputed = true;
        }
        Decision {
            class,
            targeted: true,
            forward: Some(octets),
            record: Some(record),
        }
    }

    pub fn effective_probability(&self, class: PacketClass, rho: f64) -> f64 {
        let load = (1.0 - self.policy.load_coupling * rho).max(0.0);
        (self.policy.base_probability(class) * load).clamp(0.0, 1.0)
    }
}

/// Copies every CRC octet of `original` into `rewritten` (same length), as
/// an adversary that does not bother recomputing them would.
fn restore_crcs(original: &[u8], rewritten: &mut [u8]) {
    let n = original.len().min(rewritten.len());
    rewritten[HEADER_LEN - 2..HEADER_LEN].copy_from_slice(&original[HEADER_LEN - 2..HEADER_LEN]);
    let mut pos = HEADER_LEN;
    while pos < n {
        let block = BLOCK_LEN.min(n - pos - 2);
        let crc = pos + block;
        rewritten[crc..crc + 2].copy_from_slice(&original[crc..crc + 2]);
        pos = crc + 2;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryStats {
    pub intercepted: u64,
    pub forwarded: u64,
    pub buffer_drops: u64,
    /// Targeted packets seen (each arrival, retransmissions included).
    pub targeted: u64,
    pub attempts: u64,
    pub successes: u64,
    pub fci_attempts: u64,
    pub fci_successes: u64,
    pub fdi_attempts: u64,
    pub fdi_successes: u64,
}

impl AdversaryStats {
    /// Fraction of targeted arrivals that were not rewritten and forwarded.
    pub fn miss_rate(&self) -> f64 {
        if self.targeted == 0 {
            return 0.0;
        }
        1.0 - self.successes as f64 / self.targeted as f64
    }
}

/// Timer token the adversary uses for end-of-service events.
pub const SERVICE_TIMER: u64 = 0xAD00;
/// Timer token for releasing rewritten frames after their processing delay.
pub const FORWARD_TIMER: u64 = 0xAD01;

/// In-path adversary with one FIFO ingress buffer and a single server.
///
/// The server takes `1 / service_rate_pps` per frame. Rewritten frames then
/// wait out their processing delay off the server, so the delay shows up in
/// RTT without throttling the relay.
#[derive(Debug)]
pub struct Adversary {
    node: NodeId,
    mutator: Mutator,
    rng: ChaCha8Rng,
    buffer: VecDeque<Frame>,
    in_service: Option<(Frame, Decision)>,
    /// Rewritten packets keyed by release time and arrival order.
    delayed: BTreeMap<(SimTime, u64), Packet>,
    delayed_seq: u64,
    arrivals: VecDeque<SimTime>,
    records: Vec<MutationRecord>,
    stats: AdversaryStats,
    time_scale: f64,
}

impl Adversary {
    /// `time_scale` converts network time to the scenario clock used in
    /// mutation records.
    pub fn new(
        node: NodeId,
        policy: AttackPolicy,
        map: &PointMap,
        seed: u64,
        time_scale: f64,
    ) -> Result<Self, AttackError> {
        Ok(Self {
            node,
            mutator: Mutator::new(policy, map)?,
            rng: ChaCha8Rng::seed_from_u64(seed),
            buffer: VecDeque::new(),
            in_service: None,
            delayed: BTreeMap::new(),
            delayed_seq: 0,
            arrivals: VecDeque::new(),
            records: Vec::new(),
            stats: AdversaryStats::default(),
            time_scale,
        })
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn mutator(&self) -> &Mutator {
        &self.mutator
    }

    pub fn records(&self) -> &[MutationRecord] {
        &self.records
    }

    pub fn stats(&self) -> AdversaryStats {
        self.stats
    }

    /// Poisons each pair: the gateway learns the victim's address at the
    /// adversary and the victim learns the gateway's, then turns on
    /// interception.
    pub fn engage(
        &mut self,
        net: &mut Network,
        pairs: &[(Ipv4Addr, Ipv4Addr)],
    ) -> Result<(), NetError> {
        net.set_intercept(self.node, true);
        for &(gateway, victim) in pairs {
            net.send_arp_reply(self.node, gateway, None, victim)?;
            net.send_arp_reply(self.node, victim, None, gateway)?;
        }
        Ok(())
    }

    /// Current traffic-intensity estimate from recent arrivals.
    pub fn rho(&mut self, now: SimTime) -> f64 {
        let policy = self.mutator.policy();
        let window = SimTime::from_secs_f64(policy.load_window_s);
        let horizon = now.saturating_sub(window);
        while self.arrivals.front().is_some_and(|&t| t < horizon) {
            self.arrivals.pop_front();
        }
        let lambda = self.arrivals.len() as f64 / policy.load_window_s;
        lambda / policy.service_rate_pps
    }

    pub fn on_intercept(&mut self, net: &mut Network, frame: Frame) {
        let now = net.now();
        self.stats.intercepted += 1;
        self.arrivals.push_back(now);
        if self.buffer.len() >= self.mutator.policy().buffer_capacity {
            self.stats.buffer_drops += 1;
            if is_dnp3(&frame) {
                let targeted = self.peek_targeted(&frame);
                if let Some(class) = targeted {
                    self.stats.targeted += 1;
                    self.push_record(
                        net,
                        MutationRecord {
                            time: now.as_secs_f64() * self.time_scale,
                            class,
                            attempted: true,
                            succeeded: false,
                            probability: 0.0,
                            changes: vec![],
                            crc_recomputed: false,
                            seq_preserved: true,
                            tcp_seq: frame.packet.tcp_seq(),
                            detail: Some("buffer_full".into()),
                        },
                    );
                }
            }
            return;
        }
        self.buffer.push_back(frame);
        if self.in_service.is_none() {
            self.start_service(net);
        }
    }

    /// Whether a frame would be rewritten, without rolling or changing
    /// state.
    fn peek_targeted(&self, frame: &Frame) -> Option<PacketClass> {
        let msg = decode_message(&frame.packet.payload).ok()?;
        let class = classify(&msg.fragment);
        self.mutator.plan(&msg, class).map(|_| class)
    }

    /// Handles [`SERVICE_TIMER`] and [`FORWARD_TIMER`]; other tokens are
    /// ignored.
    pub fn on_timer(&mut self, net: &mut Network, token: u64) {
        match token {
            SERVICE_TIMER => self.finish_service(net),
            FORWARD_TIMER => self.release(net),
            _ => {}
        }
    }

    fn finish_service(&mut self, net: &mut Network) {
        let Some((frame, decision)) = self.in_service.take() else {
            return;
        };
        if let Some(octets) = decision.forward {
            let mut packet = frame.packet;
            packet.payload = octets;
            if decision.targeted {
                let delay = self.mutator.policy().processing_delay(decision.class);
                let at = net.now() + SimTime::from_secs_f64(delay);
                self.delayed.insert((at, self.delayed_seq), packet);
                self.delayed_seq += 1;
                net.schedule_timer(self.node, at, FORWARD_TIMER);
            } else {
                self.stats.forwarded += 1;
                let _ = net.send_packet(self.node, packet);
            }
        }
        self.start_service(net);
    }

    fn release(&mut self, net: &mut Network) {
        let now = net.now();
        while let Some(entry) = self.delayed.first_entry() {
            if entry.key().0 > now {
                break;
            }
            let packet = entry.remove();
            self.stats.forwarded += 1;
            let _ = net.send_packet(self.node, packet);
        }
    }

    fn start_service(&mut self, net: &mut Network) {
        let Some(frame) = self.buffer.pop_front() else {
            return;
        };
        let now = net.now();
        let decision = if is_dnp3(&frame) {
            let rho = self.rho(now);
            let t = now.as_secs_f64() * self.time_scale;
            let mut d = self
                .mutator
                .process(t, &frame.packet.payload, rho, &mut self.rng);
            if let Some(rec) = d.record.as_mut() {
                rec.tcp_seq = frame.packet.tcp_seq();
            }
            d
        } else {
            Decision {
                class: PacketClass::Other,
                targeted: false,
                forward: Some(frame.packet.payload.clone()),
                record: None,
            }
        };
        let service = 1.0 / self.mutator.policy().service_rate_pps;
        if decision.targeted {
            let s = &mut self.stats;
            s.targeted += 1;
            s.attempts += 1;
            let ok = decision.forward.is_some();
            s.successes += ok as u64;
            if decision.class.is_command() {
                s.fci_attempts += 1;
                s.fci_successes += ok as u64;
            } else {
                s.fdi_attempts += 1;
                s.fdi_successes += ok as u64;
            }
        }
        if let Some(rec) = decision.record.clone() {
            self.push_record(net, rec);
        }
        net.schedule_timer(
            self.node,
            now + SimTime::from_secs_f64(service),
            SERVICE_TIMER,
        );
        self.in_service = Some((frame, decision));
    }

    fn push_record(&mut self, net: &mut Network, rec: MutationRecord) {
        if net.log_enabled() {
            let mut ev = EventRecord::new(net.now(), "mutation", net.node_name(self.node));
            ev.proto = Some("dnp3".into());
            ev.seq = rec.tcp_seq;
            ev.detail = serde_json::to_value(&rec).ok();
            net.record(ev);
        }
        self.records.push(rec);
    }
}

fn is_dnp3(frame: &Frame) -> bool {
    frame.packet.uses_port(DNP3_PORT) && !frame.packet.payload.is_empty()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::Targets;
    use crate::dnp3::{
        decode_frame, AppFragment, CodecError, CommandStatus, LinkHeader, PointGroup,
        CONTROL_MASTER_DATA, CONTROL_OUTSTATION_DATA,
    };
    use crate::grid::{BranchId, GridModel};

    fn model() -> GridModel {
        GridModel::from_toml_str(include_str!("../../data/desk_grid.toml")).unwrap()
    }

    fn map() -> PointMap {
        PointMap::for_grid(&model(), &[BranchId(10)])
    }

    fn message(function: FunctionCode, kind: PointKind, points: Vec<(u16, PointValue)>) -> Vec<u8> {
        let (control, fragment) = if function.is_response() {
            (
                CONTROL_OUTSTATION_DATA,
                AppFragment::response(3, vec![PointGroup { kind, points }]),
            )
        } else {
            (
                CONTROL_MASTER_DATA,
                AppFragment::request(3, function, vec![PointGroup { kind, points }]),
            )
        };
        encode_message(&Message {
            header: LinkHeader {
                control,
                destination: 10,
                source: 1,
            },
            transport_seq: 9,
            fragment,
        })
        .unwrap()
    }

    fn crob(index: u16, code: ControlCode) -> Vec<u8> {
        message(
            FunctionCode::DirectOperate,
            PointKind::BinaryOutputCommand,
            vec![(
                index,
                PointValue::Control {
                    code,
                    status: CommandStatus::Success,
                },
            )],
        )
    }

    fn policy(uc: UseCase, targets: Targets) -> AttackPolicy {
        AttackPolicy {
            p: Some(1.0),
            q: Some(1.0),
            r: Some(1.0),
            ..AttackPolicy::new(uc, targets)
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    #[test]
    fn uc1_close_becomes_trip_with_valid_crcs() {
        let m = map();
        let targets = Targets {
            breakers: vec![BranchId(1)],
            ..Targets::default()
        };
        let mut mu = Mutator::new(policy(UseCase::Uc1, targets), &m).unwrap();
        let idx = m.breaker_index(BranchId(1)).unwrap();
        let original = crob(idx, ControlCode::Close);
        let d = mu.process(0.0, &original, 0.0, &mut rng());
        assert_eq!(d.class, PacketClass::Bo);
        let out = d.forward.unwrap();
        assert_eq!(out.len(), original.len());
        let before = decode_message(&original).unwrap();
        let after = decode_message(&out).unwrap();
        assert_eq!(after.transport_seq, before.transport_seq);
        assert_eq!(after.fragment.control, before.fragment.control);
        assert!(matches!(
            after.fragment.points().next().unwrap().2,
            PointValue::Control {
                code: ControlCode::Trip,
                ..
            }
        ));
        let rec = d.record.unwrap();
        assert!(rec.succeeded && rec.crc_recomputed && rec.seq_preserved);
    }

    #[test]
    fn non_targets_pass_byte_identical() {
        let m = map();
        let targets = Targets {
            breakers: vec![BranchId(1)],
            ..Targets::default()
        };
        let mut mu = Mutator::new(policy(UseCase::Uc1, targets), &m).unwrap();
        // Another breaker, and a TRIP on the targeted one.
        let other = crob(m.breaker_index(BranchId(2)).unwrap(), ControlCode::Close);
        let trip = crob(m.breaker_index(BranchId(1)).unwrap(), ControlCode::Trip);
        let read = encode_message(&Message {
            header: LinkHeader {
                control: CONTROL_MASTER_DATA,
                destination: 10,
                source: 1,
            },
            transport_seq: 0,
            fragment: AppFragment::request(0, FunctionCode::Read, vec![]),
        })
        .unwrap();
        for bytes in [other, trip, read, vec![1, 2, 3]] {
            let d = mu.process(0.0, &bytes, 0.0, &mut rng());
            assert!(!d.targeted);
            assert_eq!(d.forward.as_deref(), Some(&bytes[..]));
        }
    }

    #[test]
    fn uc2_setpoint_forced_to_zero() {
        let m = map();
        let g = crate::grid::GenId(4);
        let targets = Targets {
            generators: vec![g],
            ..Targets::default()
        };
        let mut mu = Mutator::new(policy(UseCase::Uc2, targets), &m).unwrap();
        let bytes = message(
            FunctionCode::DirectOperate,
            PointKind::AnalogOutputCommand,
            vec![(
                m.setpoint_index(g).unwrap(),
                PointValue::Setpoint {
                    value: 800.0,
                    status: CommandStatus::Success,
                },
            )],
        );
        let out = mu.process(0.0, &bytes, 0.0, &mut rng()).forward.unwrap();
        let msg = decode_message(&out).unwrap();
        assert!(matches!(
            msg.fragment.points().next().unwrap().2,
            PointValue::Setpoint { value, .. } if *value == 0.0
        ));
    }

    fn read_response(m: &PointMap, readings: &[(u16, f64)]) -> Vec<u8> {
        let _ = m;
        message(
            FunctionCode::SolicitedResponse,
            PointKind::AnalogInput,
            readings
                .iter()
                .map(|&(i, v)| (i, PointValue::Analog(v)))
                .collect(),
        )
    }

    fn analog(bytes: &[u8]) -> Vec<(u16, f64)> {
        decode_message(bytes)
            .unwrap()
            .fragment
            .points()
            .filter_map(|(_, i, v)| match v {
                PointValue::Analog(x) => Some((i, *x)),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn uc3_falsifies_generator_and_flow_readings() {
        let m = map();
        let g = crate::grid::GenId(2);
        let targets = Targets {
            generators: vec![g],
            flows: vec![BranchId(10)],
            ..Targets::default()
        };
        let mut mu = Mutator::new(policy(UseCase::Uc3, targets), &m).unwrap();
        let gi = m.gen_reading_index(g).unwrap();
        let fi = m.flow_reading_index(BranchId(10)).unwrap();
        let bytes = read_response(&m, &[(gi, 1000.0), (fi, 400.0)]);
        let out = mu.process(0.0, &bytes, 0.0, &mut rng()).forward.unwrap();
        assert_eq!(analog(&out), vec![(gi, 20.0), (fi, 3000.0)]);
    }

    #[test]
    fn mask_needs_an_observed_setpoint() {
        let m = map();
        let g = crate::grid::GenId(2);
        let gi = m.gen_reading_index(g).unwrap();
        let readings = BTreeMap::from([(gi, g)]);
        let frag = decode_message(&read_response(&m, &[(gi, 0.0)]))
            .unwrap()
            .fragment;
        assert!(mitm_mask(&frag, &readings, &BTreeMap::new()).is_none());
        let observed = BTreeMap::from([(g, 1000.0)]);
        let (masked, changes) = mitm_mask(&frag, &readings, &observed).unwrap();
        assert_eq!(changes.len(), 1);
        assert_eq!(
            masked.points().next().unwrap().2,
            &PointValue::Analog(1000.0)
        );
    }

    #[test]
    fn uc4_phases_fdi_then_fci_then_mask_then_trip() {
        let m = map();
        let g = crate::grid::GenId(2);
        let targets = Targets {
            generators: vec![g],
            breakers: vec![BranchId(10)],
            ..Targets::default()
        };
        let mut mu = Mutator::new(policy(UseCase::Uc4, targets), &m).unwrap();
        let gi = m.gen_reading_index(g).unwrap();
        let ao = m.setpoint_index(g).unwrap();
        let bo = m.breaker_index(BranchId(10)).unwrap();
        let close = crob(bo, ControlCode::Close);
        let restore = message(
            FunctionCode::DirectOperate,
            PointKind::AnalogOutputCommand,
            vec![(
                ao,
                PointValue::Setpoint {
                    value: 1000.0,
                    status: CommandStatus::Success,
                },
            )],
        );
        // Before any FDI the breaker command and setpoint pass.
        assert!(!mu.process(0.0, &close, 0.0, &mut rng()).targeted);
        assert!(!mu.process(0.0, &restore, 0.0, &mut rng()).targeted);
        let out = mu.process(1.0, &read_response(&m, &[(gi, 150.0)]), 0.0, &mut rng());
        assert_eq!(analog(&out.forward.unwrap()), vec![(gi, 20.0)]);
        let out = mu.process(2.0, &restore, 0.0, &mut rng()).forward.unwrap();
        assert!(matches!(
            decode_message(&out).unwrap().fragment.points().next().unwrap().2,
            PointValue::Setpoint { value, .. } if *value == 0.0
        ));
        assert!(!mu.masking());
        let out = mu.process(3.0, &read_response(&m, &[(gi, 0.0)]), 0.0, &mut rng());
        assert_eq!(analog(&out.forward.unwrap()), vec![(gi, 1000.0)]);
        assert!(mu.masking());
        assert!(mu.process(4.0, &close, 0.0, &mut rng()).targeted);
    }

    #[test]
    fn skipped_crcs_are_detectable() {
        let m = map();
        let targets = Targets {
            breakers: vec![BranchId(1)],
            ..Targets::default()
        };
        let mut p = policy(UseCase::Uc1, targets);
        p.skip_crc = true;
        let mut mu = Mutator::new(p, &m).unwrap();
        let d = mu.process(
            0.0,
            &crob(m.breaker_index(BranchId(1)).unwrap(), ControlCode::Close),
            0.0,
            &mut rng(),
        );
        let rec = d.record.unwrap();
        assert!(rec.succeeded && !rec.crc_recomputed);
        assert!(matches!(
            decode_frame(&d.forward.unwrap()),
            Err(CodecError::BadBlockCrc(_))
        ));
    }

    #[test]
    fn seeded_mutation_fraction_matches_p() {
        let m = map();
        let targets = Targets {
            breakers: vec![BranchId(1)],
            ..Targets::default()
        };
        let mut p = policy(UseCase::Uc1, targets);
        p.p = Some(0.5);
        let bytes = crob(m.breaker_index(BranchId(1)).unwrap(), ControlCode::Close);
        for seed in 0..5 {
            let mut mu = Mutator::new(p.clone(), &m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 10_000;
            let ok = (0..n)
                .filter(|_| mu.process(0.0, &bytes, 0.0, &mut rng).forward.is_some())
                .count();
            let frac = ok as f64 / n as f64;
            assert!((frac - 0.5).abs() <= 0.02, "seed {seed}: {frac}");
        }
    }

    #[test]
    fn load_lowers_success_probability() {
        let mut p = policy(UseCase::Uc1, Targets::default());
        p.p = Some(0.8);
        let mu = Mutator::new(p, &map()).unwrap();
        assert_eq!(mu.effective_probability(PacketClass::Bo, 0.0), 0.8);
        assert!((mu.effective_probability(PacketClass::Bo, 0.4) - 0.8 * 0.8).abs() < 1e-12);
        assert_eq!(mu.effective_probability(PacketClass::Bo, 5.0), 0.0);
    }

    #[test]
    fn policy_validation() {
        let mut p = AttackPolicy::new(UseCase::Uc2, Targets::default());
        p.q = None;
        assert!(matches!(
            p.validate(),
            Err(AttackError::MissingProbability { name: "q", .. })
        ));
        let mut p = AttackPolicy::new(UseCase::Uc1, Targets::default());
        p.q = None;
        p.r = None;
        assert!(p.validate().is_ok());
        p.fdi_processing_delay_s = 0.05;
        assert!(p.validate().is_err());
        p.fdi_processing_delay_s = 0.2;
        p.p = Some(1.5);
        assert!(p.validate().is_err());
    }
}

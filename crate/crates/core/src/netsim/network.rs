use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::link::Channel;
use super::metrics::{self, DataTx, FlowKey, FlowRegistry, FlowState, Measurement, RttSample};
use super::packet::{ArpOp, Frame, IcmpKind, LinkAddr, Packet, Protocol, TcpFlags};
use super::topology::{in_subnet, NodeKind, RouteConfig, SegmentKind, Topology};
use super::{LinkSpec, NetError, SimTime};

pub const DNP3_PORT: u16 = 20000;
const FIRST_EPHEMERAL_PORT: u16 = 49152;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConnId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FloodId(pub u32);

/// Send pattern of an echo-request flood.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloodArrivals {
    /// One request every interval.
    #[default]
    Periodic,
    /// Exponential gaps with the interval as mean.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcpConfig {
    pub rto_s: f64,
    pub max_retries: u32,
}

impl Default for TcpConfig {
    fn default() -> Self {
        Self {
            rto_s: 0.2,
            max_retries: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogLevel {
    #[default]
    Full,
    /// DNP3-port packets, ARP and connection events only.
    Dnp3Only,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub seed: u64,
    #[serde(default)]
    pub tcp: TcpConfig,
    /// Port whose traffic feeds throughput, goodput and RTT metrics.
    #[serde(default = "default_port")]
    pub monitor_port: u16,
    #[serde(default)]
    pub log_level: LogLevel,
}

fn default_port() -> u16 {
    DNP3_PORT
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            tcp: TcpConfig::default(),
            monitor_port: DNP3_PORT,
            log_level: LogLevel::Full,
        }
    }
}

/// Notification passed to the [`Handler`] driving a simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum NetEvent {
    Timer {
        node: NodeId,
        token: u64,
    },
    /// Client side of a connection completed its handshake.
    Connected {
        conn: ConnId,
    },
    /// Server side accepted a connection.
    Accepted {
        conn: ConnId,
    },
    ConnectionFailed {
        conn: ConnId,
    },
    Data {
        conn: ConnId,
        payload: Vec<u8>,
    },
    /// An intercepting node received a packet addressed to someone else.
    Intercepted {
        node: NodeId,
        frame: Frame,
    },
    /// A tapping node observed a frame.
    Tap {
        node: NodeId,
        frame: Frame,
    },
}

pub trait Handler {
    fn on_event(&mut self, net: &mut Network, event: NetEvent);
}

impl Handler for Vec<NetEvent> {
    fn on_event(&mut self, _net: &mut Network, event: NetEvent) {
        self.push(event);
    }
}

/// One JSON-lines log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: f64,
    pub kind: String,
    pub node: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proto: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dst: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flags: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hex: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl EventRecord {
    pub fn new(t: SimTime, kind: &str, node: &str) -> Self {
        Self {
            t: t.as_secs_f64(),
            kind: kind.into(),
            node: node.into(),
            proto: None,
            src: None,
            dst: None,
            size: None,
            seq: None,
            flags: None,
            hex: None,
            detail: None,
        }
    }
}

/// Frame counters for the conservation check: every offered frame has
/// arrived, been dropped, or is still in flight.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetStats {
    pub frames_offered: u64,
    pub frames_arrived: u64,
    pub frames_dropped: u64,
    pub queue_drops: u64,
    pub frames_in_flight: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArpTable {
    pub bindings: BTreeMap<Ipv4Addr, LinkAddr>,
}

impl ArpTable {
    /// Overwrites unconditionally, returning the previous binding.
    pub fn update(&mut self, ip: Ipv4Addr, mac: LinkAddr) -> Option<LinkAddr> {
        self.bindings.insert(ip, mac)
    }

    pub fn get(&self, ip: Ipv4Addr) -> Option<LinkAddr> {
        self.bindings.get(&ip).copied()
    }
}

#[derive(Debug, Clone)]
struct Iface {
    segment: usize,
    ip: Ipv4Addr,
    prefix: u8,
    mac: LinkAddr,
}

#[derive(Debug, Clone)]
struct Node {
    name: String,
    kind: NodeKind,
    ifaces: Vec<Iface>,
    routes: Vec<RouteConfig>,
    arp: ArpTable,
    intercept: bool,
    tap: bool,
    next_port: u16,
}

#[derive(Debug, Clone)]
struct Segment {
    kind: SegmentKind,
    channels: Vec<Channel>,
    /// (node, interface index) in declaration order.
    members: Vec<(NodeId, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnState {
    SynSent,
    Established,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnInfo {
    pub node: NodeId,
    pub local_ip: Ipv4Addr,
    pub local_port: u16,
    pub remote_ip: Ipv4Addr,
    pub remote_port: u16,
    pub state: ConnState,
    pub client: bool,
}

#[derive(Debug, Clone)]
struct Pending {
    payload: Vec<u8>,
    syn: bool,
    first_tx: SimTime,
    attempts: u32,
}

impl Pending {
    fn seq_len(&self) -> u32 {
        if self.syn {
            1
        } else {
            self.payload.len() as u32
        }
    }
}

#[derive(Debug, Clone)]
struct Conn {
    info: ConnInfo,
    isn: u32,
    snd_nxt: u32,
    rcv_nxt: u32,
    unacked: BTreeMap<u32, Pending>,
}

impl Conn {
    fn flow_key(&self) -> FlowKey {
        FlowKey {
            src: self.info.local_ip,
            src_port: self.info.local_port,
            dst: self.info.remote_ip,
            dst_port: self.info.remote_port,
        }
    }
}

#[derive(Debug, Clone)]
struct Flood {
    node: NodeId,
    dst: Ipv4Addr,
    payload_size: usize,
    interval: SimTime,
    stop: Option<SimTime>,
    active: bool,
    sent: u64,
    replies: u64,
    next_seq: u16,
    /// Draws exponential gaps when set; periodic otherwise.
    poisson: Option<ChaCha8Rng>,
}

#[derive(Debug, Clone)]
enum Ev {
    Arrive {
        segment: usize,
        frame: Frame,
    },
    Rto {
        conn: ConnId,
        seq: u32,
        attempt: u32,
    },
    Timer {
        node: NodeId,
        token: u64,
    },
    FloodTick {
        flood: FloodId,
    },
}

#[derive(Debug, Clone)]
struct Scheduled {
    time: SimTime,
    order: u64,
    ev: Ev,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.order) == (other.time, other.order)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // Reversed so the max-heap pops the earliest (time, insertion order).
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.order).cmp(&(self.time, self.order))
    }
}

/// Discrete-event network: nodes, links, ARP, ICMP and MiniTcp.
pub struct Network {
    config: NetConfig,
    now: SimTime,
    order: u64,
    queue: BinaryHeap<Scheduled>,
    nodes: Vec<Node>,
    segments: Vec<Segment>,
    conns: Vec<Conn>,
    conn_index: BTreeMap<(NodeId, u16, Ipv4Addr, u16), ConnId>,
    listeners: BTreeSet<(NodeId, u16)>,
    floods: Vec<Flood>,
    outbox: VecDeque<NetEvent>,
    log: Vec<EventRecord>,
    rng: ChaCha8Rng,
    next_packet_id: u64,
    stats: NetStats,
    data_tx: Vec<DataTx>,
    rtts: Vec<RttSample>,
    flows: FlowRegistry,
}

impl Network {
    pub fn new(topology: &Topology, config: NetConfig) -> Result<Self, NetError> {
        topology.validate()?;
        let seg_index: BTreeMap<&str, usize> = topology
            .segments
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.as_str(), i))
            .collect();
        let mut segments: Vec<Segment> = topology
            .segments
            .iter()
            .map(|s| Segment {
                kind: s.kind,
                channels: match s.kind {
                    SegmentKind::PointToPoint => vec![Channel::new(s.link), Channel::new(s.link)],
                    SegmentKind::Shared => vec![Channel::new(s.link)],
                },
                members: Vec::new(),
            })
            .collect();
        let mut next_mac = 1;
        let mut nodes = Vec::new();
        for (n, cfg) in topology.nodes.iter().enumerate() {
            let ifaces = cfg
                .interfaces
                .iter()
                .enumerate()
                .map(|(k, i)| {
                    let segment = seg_index[i.segment.as_str()];
                    segments[segment].members.push((NodeId(n), k));
                    let mac = LinkAddr(next_mac);
                    next_mac += 1;
                    Iface {
                        segment,
                        ip: i.ip,
                        prefix: i.prefix,
                        mac,
                    }
                })
                .collect();
            nodes.push(Node {
                name: cfg.name.clone(),
                kind: cfg.kind,
                ifaces,
                routes: cfg.routes.clone(),
                arp: ArpTable::default(),
                intercept: false,
                tap: cfg.tap,
                next_port: FIRST_EPHEMERAL_PORT,
            });
        }
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            config,
            now: SimTime::ZERO,
            order: 0,
            queue: BinaryHeap::new(),
            nodes,
            segments,
            conns: Vec::new(),
            conn_index: BTreeMap::new(),
            listeners: BTreeSet::new(),
            floods: Vec::new(),
            outbox: VecDeque::new(),
            log: Vec::new(),
            rng,
            next_packet_id: 1,
            stats: NetStats::default(),
            data_tx: Vec::new(),
            rtts: Vec::new(),
            flows: FlowRegistry::default(),
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name).map(NodeId)
    }

    pub fn node_name(&self, node: NodeId) -> &str {
        &self.nodes[node.0].name
    }

    /// Address of the node's first interface.
    pub fn node_ip(&self, node: NodeId) -> Ipv4Addr {
        self.nodes[node.0].ifaces[0].ip
    }

    pub fn node_mac(&self, node: NodeId) -> LinkAddr {
        self.nodes[node.0].ifaces[0].mac
    }

    pub fn node_ips(&self, node: NodeId) -> Vec<Ipv4Addr> {
        self.nodes[node.0].ifaces.iter().map(|i| i.ip).collect()
    }

    pub fn owner_of(&self, ip: Ipv4Addr) -> Option<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.ifaces.iter().any(|i| i.ip == ip))
            .map(NodeId)
    }

    /// Every configured IP-to-link-address binding.
    pub fn true_bindings(&self) -> BTreeMap<Ipv4Addr, LinkAddr> {
        self.nodes
            .iter()
            .flat_map(|n| n.ifaces.iter().map(|i| (i.ip, i.mac)))
            .collect()
    }

    pub fn set_intercept(&mut self, node: NodeId, on: bool) {
        self.nodes[node.0].intercept = on;
    }

    pub fn arp_table(&self, node: NodeId) -> &ArpTable {
        &self.nodes[node.0].arp
    }

    pub fn stats(&self) -> NetStats {
        NetStats {
            frames_in_flight: self
                .queue
                .iter()
                .filter(|s| matches!(s.ev, Ev::Arrive { .. }))
                .count() as u64,
            ..self.stats
        }
    }

    pub fn log(&self) -> &[EventRecord] {
        &self.log
    }

    pub fn take_log(&mut self) -> Vec<EventRecord> {
        std::mem::take(&mut self.log)
    }

    pub fn log_enabled(&self) -> bool {
        self.config.log_level != LogLevel::None
    }

    /// Appends an application-level record (ignored when logging is off).
    pub fn record(&mut self, rec: EventRecord) {
        if self.log_enabled() {
            self.log.push(rec);
        }
    }

    pub fn flows(&self) -> &FlowRegistry {
        &self.flows
    }

    pub fn rtt_samples(&self) -> &[RttSample] {
        &self.rtts
    }

    pub fn data_transmissions(&self) -> &[DataTx] {
        &self.data_tx
    }

    pub fn measure(&self, start: SimTime, end: SimTime) -> Measurement {
        metrics::measure(&self.data_tx, &self.rtts, &self.flows, start, end)
    }

    fn schedule(&mut self, time: SimTime, ev: Ev) {
        self.order += 1;
        self.queue.push(Scheduled {
            time,
            order: self.order,
            ev,
        });
    }

    pub fn schedule_timer(&mut self, node: NodeId, at: SimTime, token: u64) {
        let at = at.max(self.now);
        self.schedule(at, Ev::Timer { node, token });
    }

    /// Runs every event up to and including `until`, handing notifications to
    /// `handler` as they occur. The clock ends at `until`.
    pub fn advance_with<H: Handler + ?Sized>(&mut self, until: SimTime, handler: &mut H) {
        self.flush(handler);
        while self.queue.peek().is_some_and(|s| s.time <= until) {
            let s = self.queue.pop().expect("peeked");
            self.now = s.time;
            self.process(s.ev);
            self.flush(handler);
        }
        self.now = self.now.max(until);
    }

    /// Like [`Network::advance_with`], collecting the notifications.
    pub fn advance(&mut self, until: SimTime) -> Vec<NetEvent> {
        let mut out = Vec::new();
        self.advance_with(until, &mut out);
        out
    }

    fn flush<H: Handler + ?Sized>(&mut self, handler: &mut H) {
        while let Some(e) = self.outbox.pop_front() {
            handler.on_event(self, e);
        }
    }

    fn process(&mut self, ev: Ev) {
        match ev {
            Ev::Arrive { segment, frame } => self.arrive(segment, frame),
            Ev::Rto { conn, seq, attempt } => self.rto(conn, seq, attempt),
            Ev::Timer { node, token } => self.outbox.push_back(NetEvent::Timer { node, token }),
            Ev::FloodTick { flood } => self.flood_tick(flood),
        }
    }

    fn new_packet(
        &mut self,
        src: (Ipv4Addr, u16),
        dst: (Ipv4Addr, u16),
        protocol: Protocol,
        payload: Vec<u8>,
    ) -> Packet {
        let id = self.next_packet_id;
        self.next_packet_id += 1;
        Packet {
            id,
            src: src.0,
            dst: dst.0,
            src_port: src.1,
            dst_port: dst.1,
            protocol,
            payload,
            is_retransmission: false,
            created_at: self.now,
        }
    }

    // ---- logging ---------------------------------------------------------

    fn wants(&self, packet: &Packet) -> bool {
        match self.config.log_level {
            LogLevel::Full => true,
            LogLevel::Dnp3Only => {
                packet.uses_port(self.config.monitor_port)
                    || matches!(packet.protocol, Protocol::Arp { .. })
            }
            LogLevel::None => false,
        }
    }

    fn log_packet(&mut self, kind: &str, node: NodeId, packet: &Packet, detail: Option<&str>) {
        if !self.wants(packet) {
            return;
        }
        let mut rec = EventRecord::new(self.now, kind, &self.nodes[node.0].name);
        let (proto, flags) = match &packet.protocol {
            Protocol::MiniTcp { flags, .. } => {
                let mut f = String::new();
                if flags.syn {
                    f.push('S');
                }
                if flags.ack {
                    f.push('A');
                }
                if packet.is_retransmission {
                    f.push('R');
                }
                ("tcp", f)
            }
            Protocol::Icmp { kind, .. } => (
                "icmp",
                match kind {
                    IcmpKind::EchoRequest => "echo_request".into(),
                    IcmpKind::EchoReply => "echo_reply".into(),
                },
            ),
            Protocol::Arp {
                sender_ip,
                sender_mac,
                ..
            } => ("arp", format!("{sender_ip} is-at {sender_mac}")),
        };
        rec.proto = Some(proto.into());
        rec.src = Some(format!("{}:{}", packet.src, packet.src_port));
        rec.dst = Some(format!("{}:{}", packet.dst, packet.dst_port));
        rec.size = Some(packet.wire_len());
        rec.seq = packet.tcp_seq();
        rec.flags = (!flags.is_empty()).then_some(flags);
        if packet.uses_port(self.config.monitor_port) && !packet.payload.is_empty() {
            rec.hex = Some(hex::encode(&packet.payload));
        }
        rec.detail = detail.map(|d| serde_json::Value::String(d.into()));
        self.log.push(rec);
    }

    // ---- link layer ------------------------------------------------------

    fn transmit(&mut self, node: NodeId, iface: usize, frame: Frame) -> Result<(), NetError> {
        let segment = self.nodes[node.0].ifaces[iface].segment;
        let seg = &mut self.segments[segment];
        let channel = match seg.kind {
            SegmentKind::Shared => 0,
            SegmentKind::PointToPoint => seg
                .members
                .iter()
                .position(|&(n, _)| n == node)
                .expect("sender attached to its segment"),
        };
        self.stats.frames_offered += 1;
        match seg.channels[channel].offer(self.now, frame.packet.wire_len()) {
            Some(at) => {
                self.schedule(at, Ev::Arrive { segment, frame });
                Ok(())
            }
            None => {
                self.stats.frames_dropped += 1;
                self.stats.queue_drops += 1;
                self.log_packet("drop", node, &frame.packet, Some("queue_full"));
                Err(NetError::QueueFull)
            }
        }
    }

    fn arrive(&mut self, segment: usize, frame: Frame) {
        let seg = &self.segments[segment];
        let recipient = seg
            .members
            .iter()
            .copied()
            .find(|&(n, i)| self.nodes[n.0].ifaces[i].mac == frame.dst_mac);
        let tappers: Vec<NodeId> = match seg.kind {
            SegmentKind::Shared => seg
                .members
                .iter()
                .map(|&(n, _)| n)
                .filter(|n| self.nodes[n.0].tap)
                .collect(),
            SegmentKind::PointToPoint => recipient
                .map(|(n, _)| n)
                .filter(|n| self.nodes[n.0].tap)
                .into_iter()
                .collect(),
        };
        for node in tappers {
            self.outbox.push_back(NetEvent::Tap {
                node,
                frame: frame.clone(),
            });
        }
        let Some((node, iface)) = recipient else {
            self.stats.frames_dropped += 1;
            return;
        };
        self.stats.frames_arrived += 1;
        self.receive(node, iface, frame);
    }

    fn receive(&mut self, node: NodeId, _iface: usize, frame: Frame) {
        let packet = &frame.packet;
        if let Protocol::Arp {
            op: ArpOp::Reply,
            sender_ip,
            sender_mac,
            ..
        } = packet.protocol
        {
            let old = self.nodes[node.0].arp.update(sender_ip, sender_mac);
            if old != Some(sender_mac) {
                let detail = match old {
                    Some(o) => format!("{sender_ip}: {o} -> {sender_mac}"),
                    None => format!("{sender_ip}: new {sender_mac}"),
                };
                let p = packet.clone();
                self.log_packet("arp_update", node, &p, Some(&detail));
            }
            return;
        }
        if matches!(packet.protocol, Protocol::Arp { .. }) {
            return;
        }
        let n = &self.nodes[node.0];
        if n.ifaces.iter().any(|i| i.ip == packet.dst) {
            self.log_packet("deliver", node, &frame.packet, None);
            self.local_deliver(node, frame.packet);
        } else if n.intercept {
            self.log_packet("intercept", node, &frame.packet, None);
            self.outbox.push_back(NetEvent::Intercepted { node, frame });
        } else if n.kind == NodeKind::Router {
            let _ = self.send_packet(node, frame.packet);
        } else {
            self.log_packet("discard", node, &frame.packet, Some("not_for_host"));
        }
    }

    // ---- network layer ---------------------------------------------------

    /// Outgoing interface and next-hop address for `dst` (longest prefix).
    pub fn route(&self, node: NodeId, dst: Ipv4Addr) -> Result<(usize, Ipv4Addr), NetError> {
        let n = &self.nodes[node.0];
        let mut best: Option<(u8, usize, Ipv4Addr)> = None;
        let mut consider = |prefix: u8, iface: usize, hop: Ipv4Addr| {
            if best.is_none_or(|(p, _, _)| prefix > p) {
                best = Some((prefix, iface, hop));
            }
        };
        for (k, i) in n.ifaces.iter().enumerate() {
            if in_subnet(dst, i.ip, i.prefix) {
                consider(i.prefix, k, dst);
            }
        }
        for r in &n.routes {
            if in_subnet(dst, r.dest, r.prefix) {
                if let Some(k) = n
                    .ifaces
                    .iter()
                    .position(|i| in_subnet(r.via, i.ip, i.prefix))
                {
                    consider(r.prefix, k, r.via);
                }
            }
        }
        best.map(|(_, k, hop)| (k, hop))
            .ok_or(NetError::NoRoute(dst))
    }

    /// Current binding, or the on-link owner of `ip` (learned), else
    /// `Unresolvable`.
    pub fn arp_resolve(&mut self, node: NodeId, ip: Ipv4Addr) -> Result<LinkAddr, NetError> {
        if let Some(mac) = self.nodes[node.0].arp.get(ip) {
            return Ok(mac);
        }
        let segments: Vec<usize> = self.nodes[node.0]
            .ifaces
            .iter()
            .map(|i| i.segment)
            .collect();
        let responder = segments.iter().find_map(|&s| {
            self.segments[s].members.iter().find_map(|&(n, k)| {
                let i = &self.nodes[n.0].ifaces[k];
                (i.ip == ip).then_some(i.mac)
            })
        });
        match responder {
            Some(mac) => {
                self.nodes[node.0].arp.update(ip, mac);
                Ok(mac)
            }
            None => Err(NetError::Unresolvable(ip)),
        }
    }

    /// Overwrites a binding directly, returning the previous one.
    pub fn arp_update(&mut self, node: NodeId, ip: Ipv4Addr, mac: LinkAddr) -> Option<LinkAddr> {
        self.nodes[node.0].arp.update(ip, mac)
    }

    /// Sends an unsolicited ARP reply from `from` to the on-link host
    /// `victim_ip`, claiming `claimed_ip` is at `claimed_mac` (default: the
    /// sender's own link address).
    pub fn send_arp_reply(
        &mut self,
        from: NodeId,
        claimed_ip: Ipv4Addr,
        claimed_mac: Option<LinkAddr>,
        victim_ip: Ipv4Addr,
    ) -> Result<(), NetError> {
        let (iface, _) = self.route(from, victim_ip)?;
        let victim_mac = self.arp_resolve(from, victim_ip)?;
        let own = self.nodes[from.0].ifaces[iface].clone();
        let packet = self.new_packet(
            (own.ip, 0),
            (victim_ip, 0),
            Protocol::Arp {
                op: ArpOp::Reply,
                sender_ip: claimed_ip,
                sender_mac: claimed_mac.unwrap_or(own.mac),
                target_ip: victim_ip,
            },
            Vec::new(),
        );
        self.log_packet("send", from, &packet, None);
        self.transmit(
            from,
            iface,
            Frame {
                src_mac: own.mac,
                dst_mac: victim_mac,
                packet,
            },
        )
    }

    /// Routes and transmits an IP packet from `node`, which need not be its
    /// source (routers and intercepting hosts forward this way).
    pub fn send_packet(&mut self, node: NodeId, packet: Packet) -> Result<(), NetError> {
        let (iface, hop) = match self.route(node, packet.dst) {
            Ok(r) => r,
            Err(e) => {
                self.log_packet("drop", node, &packet, Some("no_route"));
                return Err(e);
            }
        };
        let dst_mac = match self.arp_resolve(node, hop) {
            Ok(m) => m,
            Err(e) => {
                self.log_packet("drop", node, &packet, Some("unresolvable"));
                return Err(e);
            }
        };
        let src_mac = self.nodes[node.0].ifaces[iface].mac;
        self.transmit(
            node,
            iface,
            Frame {
                src_mac,
                dst_mac,
                packet,
            },
        )
    }

    fn local_deliver(&mut self, node: NodeId, packet: Packet) {
        match packet.protocol {
            Protocol::Icmp {
                kind: IcmpKind::EchoRequest,
                ident,
                seq,
            } => {
                let reply = self.new_packet(
                    (packet.dst, 0),
                    (packet.src, 0),
                    Protocol::Icmp {
                        kind: IcmpKind::EchoReply,
                        ident,
                        seq,
                    },
                    packet.payload,
                );
                let _ = self.send_packet(node, reply);
            }
            Protocol::Icmp {
                kind: IcmpKind::EchoReply,
                ident,
                ..
            } => {
                if let Some(f) = self.floods.get_mut(ident as usize) {
                    if f.node == node {
                        f.replies += 1;
                    }
                }
            }
            Protocol::MiniTcp { .. } => self.tcp_input(node, packet),
            Protocol::Arp { .. } => {}
        }
    }

    /// Sends one echo request.
    pub fn send_ping(
        &mut self,
        node: NodeId,
        dst: Ipv4Addr,
        payload_size: usize,
        ident: u16,
        seq: u16,
    ) -> Result<(), NetError> {
        let src = self
            .route(node, dst)
            .map(|(k, _)| self.nodes[node.0].ifaces[k].ip)?;
        let packet = self.new_packet(
            (src, 0),
            (dst, 0),
            Protocol::Icmp {
                kind: IcmpKind::EchoRequest,
                ident,
                seq,
            },
            vec![0xA5; payload_size],
        );
        self.log_packet("send", node, &packet, None);
        self.send_packet(node, packet)
    }

    // ---- ICMP flood ------------------------------------------------------

    /// Starts an echo-request generator at `start`, one request every
    /// `interval_s`, until `stop` (exclusive) or cancellation.
    pub fn icmp_flood(
        &mut self,
        node: NodeId,
        dst: Ipv4Addr,
        payload_size: usize,
        interval_s: f64,
        start: SimTime,
        stop: Option<SimTime>,
    ) -> Result<FloodId, NetError> {
        self.icmp_flood_with(
            node,
            dst,
            payload_size,
            interval_s,
            start,
            stop,
            FloodArrivals::Periodic,
        )
    }

    /// Like [`Network::icmp_flood`], with a choice of send pattern. Poisson
    /// gaps come from a generator owned by the flood and seeded from the
    /// network seed and flood id, so two runs that differ only in payload
    /// size or mean interval see matching draws.
    #[allow(clippy::too_many_arguments)]
    pub fn icmp_flood_with(
        &mut self,
        node: NodeId,
        dst: Ipv4Addr,
        payload_size: usize,
        interval_s: f64,
        start: SimTime,
        stop: Option<SimTime>,
        arrivals: FloodArrivals,
    ) -> Result<FloodId, NetError> {
        if payload_size == 0 || !(interval_s > 0.0) {
            return Err(NetError::InvalidFlood);
        }
        let id = FloodId(self.floods.len() as u32);
        self.floods.push(Flood {
            node,
            dst,
            payload_size,
            interval: SimTime::from_secs_f64(interval_s).max(SimTime(1)),
            stop,
            active: true,
            sent: 0,
            replies: 0,
            next_seq: 0,
            poisson: (arrivals == FloodArrivals::Poisson)
                .then(|| ChaCha8Rng::seed_from_u64(self.config.seed ^ (0xF100_D000 + id.0 as u64))),
        });
        self.schedule(start.max(self.now), Ev::FloodTick { flood: id });
        Ok(id)
    }

    pub fn cancel_flood(&mut self, id: FloodId) {
        if let Some(f) = self.floods.get_mut(id.0 as usize) {
            f.active = false;
        }
    }

    /// (requests sent, replies received).
    pub fn flood_counts(&self, id: FloodId) -> (u64, u64) {
        let f = &self.floods[id.0 as usize];
        (f.sent, f.replies)
    }

    fn flood_tick(&mut self, id: FloodId) {
        let f = &mut self.floods[id.0 as usize];
        if !f.active || f.stop.is_some_and(|s| self.now >= s) {
            f.active = false;
            return;
        }
        f.sent += 1;
        let (node, dst, size, seq) = (f.node, f.dst, f.payload_size, f.next_seq);
        let interval = match f.poisson.as_mut() {
            Some(rng) => {
                let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                SimTime::from_secs_f64(-u.ln() * f.interval.as_secs_f64()).max(SimTime(1))
            }
            None => f.interval,
        };
        f.next_seq = f.next_seq.wrapping_add(1);
        let _ = self.send_ping(node, dst, size, id.0 as u16, seq);
        self.schedule(self.now + interval, Ev::FloodTick { flood: id });
    }

    // ---- MiniTcp ---------------------------------------------------------

    pub fn listen(&mut self, node: NodeId, port: u16) {
        self.listeners.insert((node, port));
    }

    pub fn conn_info(&self, conn: ConnId) -> ConnInfo {
        self.conns[conn.0 as usize].info
    }

    /// Opens a connection from a fresh ephemeral port. `Connected` follows
    /// once the SYN is answered; `ConnectionFailed` after `max_retries`
    /// unanswered retransmissions.
    pub fn connect(
        &mut self,
        node: NodeId,
        dst: Ipv4Addr,
        dst_port: u16,
    ) -> Result<ConnId, NetError> {
        let (iface, _) = self.route(node, dst)?;
        let n = &mut self.nodes[node.0];
        let local_ip = n.ifaces[iface].ip;
        let local_port = n.next_port;
        n.next_port = n.next_port.checked_add(1).unwrap_or(FIRST_EPHEMERAL_PORT);
        let isn: u32 = self.rng.gen();
        let id = ConnId(self.conns.len() as u32);
        let mut conn = Conn {
            info: ConnInfo {
                node,
                local_ip,
                local_port,
                remote_ip: dst,
                remote_port: dst_port,
                state: ConnState::SynSent,
                client: true,
            },
            isn,
            snd_nxt: isn.wrapping_add(1),
            rcv_nxt: 0,
            unacked: BTreeMap::new(),
        };
        conn.unacked.insert(
            isn,
            Pending {
                payload: Vec::new(),
                syn: true,
                first_tx: self.now,
                attempts: 1,
            },
        );
        self.flows
            .set(self.now, conn.flow_key(), FlowState::Connecting);
        self.conn_index
            .insert((node, local_port, dst, dst_port), id);
        self.conns.push(conn);
        self.log_conn("conn_open", id);
        self.transmit_segment(id, isn);
        Ok(id)
    }

    /// Queues `payload` as one segment, returning its sequence number.
    pub fn send(&mut self, conn: ConnId, payload: Vec<u8>) -> Result<u32, NetError> {
        let c = &mut self.conns[conn.0 as usize];
        if c.info.state != ConnState::Established {
            return Err(NetError::NotConnected);
        }
        if payload.is_empty() {
            return Err(NetError::EmptyPayload);
        }
        let seq = c.snd_nxt;
        c.snd_nxt = c.snd_nxt.wrapping_add(payload.len() as u32);
        c.unacked.insert(
            seq,
            Pending {
                payload,
                syn: false,
                first_tx: self.now,
                attempts: 1,
            },
        );
        self.transmit_segment(conn, seq);
        Ok(seq)
    }

    pub fn close(&mut self, conn: ConnId) {
        self.close_conn(conn);
    }

    fn close_conn(&mut self, conn: ConnId) {
        let c = &mut self.conns[conn.0 as usize];
        if c.info.state == ConnState::Closed {
            return;
        }
        c.info.state = ConnState::Closed;
        c.unacked.clear();
        let info = c.info;
        let key = c.flow_key();
        self.conn_index
            .remove(&(info.node, info.local_port, info.remote_ip, info.remote_port));
        if info.client {
            self.flows.set(self.now, key, FlowState::Closed);
        }
    }

    fn log_conn(&mut self, kind: &str, conn: ConnId) {
        if !self.log_enabled() {
            return;
        }
        let info = self.conns[conn.0 as usize].info;
        let mut rec = EventRecord::new(self.now, kind, &self.nodes[info.node.0].name);
        rec.proto = Some("tcp".into());
        rec.src = Some(format!("{}:{}", info.local_ip, info.local_port));
        rec.dst = Some(format!("{}:{}", info.remote_ip, info.remote_port));
        self.log.push(rec);
    }

    fn transmit_segment(&mut self, conn: ConnId, seq: u32) {
        let c = &self.conns[conn.0 as usize];
        let Some(p) = c.unacked.get(&seq) else {
            return;
        };
        let info = c.info;
        let flags = TcpFlags {
            syn: p.syn,
            ack: !p.syn,
        };
        let ack = if p.syn { 0 } else { c.rcv_nxt };
        let retrans = p.attempts > 1;
        let attempt = p.attempts;
        let payload = p.payload.clone();
        let bytes = payload.len() as u64;
        let mut packet = self.new_packet(
            (info.local_ip, info.local_port),
            (info.remote_ip, info.remote_port),
            Protocol::MiniTcp { seq, ack, flags },
            payload,
        );
        packet.is_retransmission = retrans;
        let monitored = bytes > 0
            && (info.local_port == self.config.monitor_port
                || info.remote_port == self.config.monitor_port);
        if monitored {
            self.data_tx.push(DataTx {
                time: self.now,
                bytes,
                retransmission: retrans,
            });
        }
        self.log_packet(
            if retrans { "retransmit" } else { "send" },
            info.node,
            &packet,
            None,
        );
        let _ = self.send_packet(info.node, packet);
        let rto = SimTime::from_secs_f64(self.config.tcp.rto_s);
        self.schedule(self.now + rto, Ev::Rto { conn, seq, attempt });
    }

    fn rto(&mut self, conn: ConnId, seq: u32, attempt: u32) {
        let max_attempts = self.config.tcp.max_retries + 1;
        let c = &mut self.conns[conn.0 as usize];
        if c.info.state == ConnState::Closed {
            return;
        }
        let Some(p) = c.unacked.get_mut(&seq) else {
            return;
        };
        if p.attempts != attempt {
            return;
        }
        if p.attempts >= max_attempts {
            self.close_conn(conn);
            self.log_conn("conn_fail", conn);
            self.outbox.push_back(NetEvent::ConnectionFailed { conn });
            return;
        }
        p.attempts += 1;
        self.transmit_segment(conn, seq);
    }

    fn send_ack(&mut self, conn: ConnId) {
        let c = &self.conns[conn.0 as usize];
        let info = c.info;
        let (seq, ack) = (c.snd_nxt, c.rcv_nxt);
        let packet = self.new_packet(
            (info.local_ip, info.local_port),
            (info.remote_ip, info.remote_port),
            Protocol::MiniTcp {
                seq,
                ack,
                flags: TcpFlags {
                    syn: false,
                    ack: true,
                },
            },
            Vec::new(),
        );
        self.log_packet("send", info.node, &packet, None);
        let _ = self.send_packet(info.node, packet);
    }

    fn tcp_input(&mut self, node: NodeId, packet: Packet) {
        let Protocol::MiniTcp { seq, ack, flags } = packet.protocol else {
            return;
        };
        let key = (node, packet.dst_port, packet.src, packet.src_port);
        let existing = self.conn_index.get(&key).copied();

        if flags.syn && !flags.ack {
            if !self.listeners.contains(&(node, packet.dst_port)) {
                return;
            }
            if let Some(conn) = existing {
                self.send_syn_ack(conn);
                return;
            }
            // A fresh SYN from a peer supersedes its older connections to
            // this port (the peer has given up on them).
            let stale: Vec<ConnId> = self
                .conn_index
                .iter()
                .filter(|((n, lp, rip, _), _)| {
                    *n == node && *lp == packet.dst_port && *rip == packet.src
                })
                .map(|(_, c)| *c)
                .collect();
            for c in stale {
                self.close_conn(c);
            }
            let isn: u32 = self.rng.gen();
            let id = ConnId(self.conns.len() as u32);
            self.conns.push(Conn {
                info: ConnInfo {
                    node,
                    local_ip: packet.dst,
                    local_port: packet.dst_port,
                    remote_ip: packet.src,
                    remote_port: packet.src_port,
                    state: ConnState::Established,
                    client: false,
                },
                isn,
                snd_nxt: isn.wrapping_add(1),
                rcv_nxt: seq.wrapping_add(1),
                unacked: BTreeMap::new(),
            });
            self.conn_index.insert(key, id);
            self.send_syn_ack(id);
            self.outbox.push_back(NetEvent::Accepted { conn: id });
            return;
        }

        let Some(conn) = existing else {
            return;
        };
        if flags.syn && flags.ack {
            let c = &mut self.conns[conn.0 as usize];
            if c.info.state == ConnState::SynSent && ack == c.isn.wrapping_add(1) {
                c.info.state = ConnState::Established;
                c.rcv_nxt = seq.wrapping_add(1);
                let isn = c.isn;
                c.unacked.remove(&isn);
                let key = c.flow_key();
                self.flows.set(self.now, key, FlowState::Established);
                self.log_conn("conn_established", conn);
                self.outbox.push_back(NetEvent::Connected { conn });
            }
            return;
        }
        if self.conns[conn.0 as usize].info.state != ConnState::Established {
            return;
        }
        if flags.ack {
            self.process_ack(conn, ack);
        }
        if !packet.payload.is_empty() {
            let c = &mut self.conns[conn.0 as usize];
            if seq == c.rcv_nxt {
                c.rcv_nxt = c.rcv_nxt.wrapping_add(packet.payload.len() as u32);
                self.send_ack(conn);
                self.outbox.push_back(NetEvent::Data {
                    conn,
                    payload: packet.payload,
                });
            } else {
                // Duplicate or out of order: re-acknowledge what we have.
                self.send_ack(conn);
            }
        }
    }

    fn send_syn_ack(&mut self, conn: ConnId) {
        let c = &self.conns[conn.0 as usize];
        let info = c.info;
        let (seq, ack) = (c.isn, c.rcv_nxt);
        let packet = self.new_packet(
            (info.local_ip, info.local_port),
            (info.remote_ip, info.remote_port),
            Protocol::MiniTcp {
                seq,
                ack,
                flags: TcpFlags {
                    syn: true,
                    ack: true,
                },
            },
            Vec::new(),
        );
        self.log_packet("send", info.node, &packet, None);
        let _ = self.send_packet(info.node, packet);
    }

    fn process_ack(&mut self, conn: ConnId, ack: u32) {
        let monitor = self.config.monitor_port;
        let now = self.now;
        let c = &mut self.conns[conn.0 as usize];
        let base = c.isn;
        // Compare in sequence space relative to the ISN to survive wrap.
        let rel = |s: u32| s.wrapping_sub(base);
        let acked: Vec<u32> = c
            .unacked
            .iter()
            .filter(|(s, p)| rel(s.wrapping_add(p.seq_len())) <= rel(ack))
            .map(|(s, _)| *s)
            .collect();
        let info = c.info;
        for s in acked {
            let p = c.unacked.remove(&s).expect("listed");
            if !p.syn && (info.local_port == monitor || info.remote_port == monitor) {
                self.rtts.push(RttSample {
                    time: now,
                    rtt: now - p.first_tx,
                    retransmissions: p.attempts - 1,
                    src_port: info.local_port,
                    dst_port: info.remote_port,
                });
            }
        }
    }
}

impl LinkSpec {
    /// Convenience for tests and examples: the reference 10 Mbps / 160 µs
    /// link with the given queue capacity.
    pub fn reference(queue_capacity: usize) -> Self {
        LinkSpec {
            queue_capacity,
            ..LinkSpec::default()
        }
    }
}

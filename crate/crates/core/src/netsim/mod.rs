//! Deterministic discrete-event IP network.
//!
//! Frames cross point-to-point links (one FIFO per direction) and shared
//! LAN segments (one FIFO for the broadcast domain). Nodes route statically,
//! resolve next hops through permissive ARP tables, answer ICMP echo, and
//! talk MiniTcp: a handshake, byte sequence numbers, cumulative ACKs and a
//! fixed retransmission timeout. Events at equal times run in insertion
//! order, so a seed fully determines a run.

mod link;
mod metrics;
mod network;
mod packet;
mod time;
mod topology;

pub use link::LinkSpec;
pub use metrics::{
    DataTx, FlowKey, FlowRegistry, FlowState, Measurement, RttSample, ThroughputSample,
};
pub use network::{
    ArpTable, ConnId, ConnInfo, ConnState, EventRecord, FloodArrivals, FloodId, Handler, LogLevel,
    NetConfig, NetEvent, NetStats, Network, NodeId, TcpConfig, DNP3_PORT,
};
pub use packet::{
    ArpOp, Frame, IcmpKind, LinkAddr, Packet, Protocol, TcpFlags, ETH_HEADER, ICMP_HEADER,
    IP_HEADER, TCP_HEADER,
};
pub use time::SimTime;
pub use topology::{
    master_name, outstation_name, InterfaceConfig, NodeConfig, NodeKind, RouteConfig,
    SegmentConfig, SegmentKind, Topology, ATTACKER, SUB_ROUTER, UCC_ROUTER,
};

use std::net::Ipv4Addr;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetError {
    #[error("invalid link: {0}")]
    InvalidLink(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("no route to {0}")]
    NoRoute(Ipv4Addr),
    #[error("cannot resolve link address of {0}")]
    Unresolvable(Ipv4Addr),
    #[error("transmit queue full")]
    QueueFull,
    #[error("connection is not established")]
    NotConnected,
    #[error("empty segment payload")]
    EmptyPayload,
    #[error("flood needs payload >= 1 and a positive interval")]
    InvalidFlood,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk(queue: usize) -> Network {
        let topo = Topology::desk(1, 1, LinkSpec::reference(queue));
        Network::new(&topo, NetConfig::default()).unwrap()
    }

    fn ids(net: &Network) -> (NodeId, NodeId, NodeId) {
        (
            net.node_id(&master_name(0)).unwrap(),
            net.node_id(&outstation_name(0)).unwrap(),
            net.node_id(ATTACKER).unwrap(),
        )
    }

    #[test]
    fn empty_advance_moves_clock() {
        let mut net = desk(8);
        assert!(net.advance(SimTime::from_millis(5)).is_empty());
        assert_eq!(net.now(), SimTime::from_millis(5));
    }

    #[test]
    fn equal_time_events_keep_insertion_order() {
        let mut net = desk(8);
        let n = NodeId(0);
        for token in [3, 1, 2] {
            net.schedule_timer(n, SimTime::from_millis(1), token);
        }
        let tokens: Vec<u64> = net
            .advance(SimTime::from_millis(2))
            .into_iter()
            .map(|e| match e {
                NetEvent::Timer { token, .. } => token,
                other => panic!("unexpected {other:?}"),
            })
            .collect();
        assert_eq!(tokens, vec![3, 1, 2]);
    }

    #[test]
    fn one_hop_latency_is_exact() {
        let mut net = desk(8);
        let (_, os, attacker) = ids(&net);
        // 1000 octets on the wire: Ethernet + IP + ICMP headers + 958.
        net.send_ping(attacker, net.node_ip(os), 1000 - 42, 1, 1)
            .unwrap();
        net.advance(SimTime(959_999));
        assert_eq!(net.stats().frames_arrived, 0);
        net.advance(SimTime(960_000));
        assert_eq!(net.stats().frames_arrived, 1);
    }

    struct Echo;
    impl Handler for Echo {
        fn on_event(&mut self, net: &mut Network, event: NetEvent) {
            if let NetEvent::Data { conn, payload } = event {
                if !net.conn_info(conn).client {
                    net.send(conn, payload).unwrap();
                }
            }
        }
    }

    fn connected(net: &mut Network) -> ConnId {
        let (m, os, _) = ids(net);
        net.listen(os, DNP3_PORT);
        let conn = net.connect(m, net.node_ip(os), DNP3_PORT).unwrap();
        let events = net.advance(SimTime::from_millis(10));
        assert!(events.contains(&NetEvent::Connected { conn }));
        conn
    }

    #[test]
    fn lossless_exchange_sends_once() {
        let mut net = desk(8);
        let conn = connected(&mut net);
        net.send(conn, vec![7; 40]).unwrap();
        net.advance_with(SimTime::from_millis(100), &mut Echo);
        let tx = net.data_transmissions();
        assert_eq!(tx.len(), 2);
        assert!(tx.iter().all(|t| !t.retransmission));
        assert_eq!(net.rtt_samples().len(), 2);
        let m = net.measure(SimTime::ZERO, SimTime::from_millis(100));
        assert_eq!(m.sample.goodput, m.sample.throughput);
        assert_eq!(m.flow_count, 1);
    }

    /// Drops the first `n` intercepted packets carrying data, forwards the
    /// rest unchanged.
    struct Dropper {
        drop_data: usize,
    }
    impl Handler for Dropper {
        fn on_event(&mut self, net: &mut Network, event: NetEvent) {
            match event {
                NetEvent::Intercepted { node, frame } => {
                    if !frame.packet.payload.is_empty()
                        && frame.packet.is_tcp()
                        && self.drop_data > 0
                    {
                        self.drop_data -= 1;
                    } else {
                        let _ = net.send_packet(node, frame.packet);
                    }
                }
                NetEvent::Data { conn, payload } if !net.conn_info(conn).client => {
                    net.send(conn, payload).unwrap();
                }
                _ => {}
            }
        }
    }

    fn poison(net: &mut Network) {
        let (_, os, attacker) = ids(net);
        // The substation router's second interface faces the LAN.
        let gw = net.node_ips(net.node_id(SUB_ROUTER).unwrap())[1];
        net.set_intercept(attacker, true);
        net.send_arp_reply(attacker, net.node_ip(os), None, gw)
            .unwrap();
        net.send_arp_reply(attacker, gw, None, net.node_ip(os))
            .unwrap();
    }

    #[test]
    fn dropped_segment_is_retransmitted_with_same_seq() {
        let mut net = desk(8);
        let conn = connected(&mut net);
        poison(&mut net);
        net.advance(SimTime::from_millis(20));
        let seq = net.send(conn, vec![1; 20]).unwrap();
        net.advance_with(SimTime::from_millis(1000), &mut Dropper { drop_data: 1 });
        let tx = net.data_transmissions();
        assert_eq!(tx.iter().filter(|t| t.retransmission).count(), 1);
        let first = net.rtt_samples()[0];
        assert_eq!(first.retransmissions, 1);
        assert!(first.rtt >= SimTime::from_millis(200));
        let resent: Vec<_> = net
            .log()
            .iter()
            .filter(|r| r.kind == "retransmit")
            .collect();
        assert_eq!(resent[0].seq, Some(seq));
        let m = net.measure(SimTime::ZERO, SimTime::from_millis(1000));
        assert!(m.sample.goodput < m.sample.throughput);
    }

    #[test]
    fn persistent_loss_fails_then_reconnects_on_new_port() {
        let mut net = desk(8);
        let conn = connected(&mut net);
        poison(&mut net);
        net.advance(SimTime::from_millis(20));
        net.send(conn, vec![1; 20]).unwrap();
        let mut h = Dropper { drop_data: 100 };
        let mut failed = false;
        let mut t = 20;
        while !failed && t < 3000 {
            t += 10;
            let mut events = Vec::new();
            net.advance_with(SimTime::from_millis(t), &mut Recorder(&mut h, &mut events));
            failed = events.contains(&NetEvent::ConnectionFailed { conn });
        }
        assert!(failed);
        assert_eq!(net.conn_info(conn).state, ConnState::Closed);
        let (m, os, _) = ids(&net);
        let again = net.connect(m, net.node_ip(os), DNP3_PORT).unwrap();
        net.advance_with(SimTime::from_millis(t + 50), &mut h);
        assert_eq!(net.conn_info(again).state, ConnState::Established);
        let ports = net
            .flows()
            .source_ports(net.node_ip(m), net.node_ip(os), DNP3_PORT);
        assert_eq!(ports.len(), 2);
        assert_ne!(ports[0], ports[1]);
        assert_eq!(net.flows().active(), 1);
    }

    struct Recorder<'a, H: Handler>(&'a mut H, &'a mut Vec<NetEvent>);
    impl<H: Handler> Handler for Recorder<'_, H> {
        fn on_event(&mut self, net: &mut Network, event: NetEvent) {
            self.1.push(event.clone());
            self.0.on_event(net, event);
        }
    }

    #[test]
    fn arp_update_resolve_and_unresolvable() {
        let mut net = desk(8);
        let (m, os, attacker) = ids(&net);
        let ip = net.node_ip(os);
        assert_eq!(net.arp_resolve(attacker, ip), Ok(net.node_mac(os)));
        net.arp_update(attacker, ip, LinkAddr(999));
        assert_eq!(net.arp_resolve(attacker, ip), Ok(LinkAddr(999)));
        let nowhere = std::net::Ipv4Addr::new(10, 10, 1, 200);
        assert_eq!(
            net.arp_resolve(attacker, nowhere),
            Err(NetError::Unresolvable(nowhere))
        );
        // Off-link addresses have no responder either.
        assert!(net.arp_resolve(m, ip).is_err());
    }

    #[test]
    fn spoofed_gateway_diverts_victim_traffic() {
        let mut net = desk(8);
        let (m, os, attacker) = ids(&net);
        poison(&mut net);
        net.advance(SimTime::from_millis(5));
        net.set_intercept(attacker, true);
        net.send_ping(os, net.node_ip(m), 64, 9, 0).unwrap();
        let events = net.advance(SimTime::from_millis(10));
        assert!(events
            .iter()
            .any(|e| matches!(e, NetEvent::Intercepted { node, .. } if *node == attacker)));
    }

    #[test]
    fn flood_counts_and_conservation() {
        let mut net = desk(8);
        let (_, _, attacker) = ids(&net);
        let router = net.node_id(SUB_ROUTER).unwrap();
        let target = net.node_ips(router)[1];
        let f = net
            .icmp_flood(
                attacker,
                target,
                1000,
                1.0,
                SimTime::ZERO,
                Some(SimTime::from_millis(10_000)),
            )
            .unwrap();
        net.advance(SimTime::from_millis(20_000));
        assert_eq!(net.flood_counts(f), (10, 10));
        let s = net.stats();
        assert_eq!(
            s.frames_offered,
            s.frames_arrived + s.frames_dropped + s.frames_in_flight
        );
    }

    #[test]
    fn saturating_flood_drops_and_cancels() {
        let mut net = desk(4);
        let (_, _, attacker) = ids(&net);
        let ucc = net.node_id(UCC_ROUTER).unwrap();
        let f = net
            .icmp_flood(
                attacker,
                net.node_ip(ucc),
                1400,
                0.0005,
                SimTime::ZERO,
                None,
            )
            .unwrap();
        net.advance(SimTime::from_millis(500));
        net.cancel_flood(f);
        let sent = net.flood_counts(f).0;
        net.advance(SimTime::from_millis(1000));
        assert_eq!(net.flood_counts(f).0, sent);
        let s = net.stats();
        assert!(s.queue_drops > 0);
        assert_eq!(s.frames_in_flight, 0);
        assert_eq!(s.frames_offered, s.frames_arrived + s.frames_dropped);
    }

    #[test]
    fn replay_is_identical() {
        let run = || {
            let mut net = desk(8);
            let conn = connected(&mut net);
            for i in 0..5u64 {
                net.send(conn, vec![i as u8; 30]).unwrap();
                net.advance_with(SimTime::from_millis(50 * (i + 1) + 10), &mut Echo);
            }
            net.log()
                .iter()
                .map(|r| serde_json::to_string(r).unwrap())
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(run(), run());
    }
}

//! The emulated desk network on its own: exact one-hop latency, a TCP-like
//! exchange across the WAN, and the resulting RTT and throughput.

use scada_cosim::netsim::{
    Handler, LinkSpec, NetConfig, NetEvent, Network, SimTime, Topology, ATTACKER, DNP3_PORT,
};

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

fn main() {
    let link = LinkSpec::default();
    println!("1000 octets one hop: {:?}", link.one_way_latency(1000));

    let mut net = Network::new(&Topology::desk(1, 1, link), NetConfig::default()).unwrap();
    let master = net.node_id("master_0").unwrap();
    let os = net.node_id("outstation_0").unwrap();
    let attacker = net.node_id(ATTACKER).unwrap();
    net.send_ping(attacker, net.node_ip(os), 958, 1, 1).unwrap();
    net.advance(SimTime(960_000));
    println!(
        "ping frames arrived by 960 us: {}",
        net.stats().frames_arrived
    );

    net.listen(os, DNP3_PORT);
    let conn = net.connect(master, net.node_ip(os), DNP3_PORT).unwrap();
    net.advance_with(SimTime::from_millis(20), &mut Echo);
    for i in 0..20u64 {
        net.send(conn, vec![0x05; 64]).unwrap();
        net.advance_with(SimTime::from_millis(20 + 10 * (i + 1)), &mut Echo);
    }
    let m = net.measure(SimTime::ZERO, net.now());
    println!(
        "{} RTT samples, mean {:.3} ms, throughput {:.0} B/s, goodput {:.0} B/s",
        m.rtts.len(),
        m.mean_rtt_s().unwrap() * 1e3,
        m.sample.throughput,
        m.sample.goodput
    );
}

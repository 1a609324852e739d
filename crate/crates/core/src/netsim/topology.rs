use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::{LinkSpec, NetError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    /// Full duplex, one FIFO per direction.
    PointToPoint,
    /// One broadcast domain sharing a single transmit FIFO.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentConfig {
    pub name: String,
    pub kind: SegmentKind,
    #[serde(flatten)]
    pub link: LinkSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Host,
    Router,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceConfig {
    pub segment: String,
    pub ip: Ipv4Addr,
    pub prefix: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteConfig {
    pub dest: Ipv4Addr,
    pub prefix: u8,
    pub via: Ipv4Addr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub name: String,
    pub kind: NodeKind,
    pub interfaces: Vec<InterfaceConfig>,
    #[serde(default)]
    pub routes: Vec<RouteConfig>,
    /// Emit tap events for traffic seen by this node.
    #[serde(default)]
    pub tap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub segments: Vec<SegmentConfig>,
    pub nodes: Vec<NodeConfig>,
}

pub(crate) fn in_subnet(addr: Ipv4Addr, net: Ipv4Addr, prefix: u8) -> bool {
    let mask = if prefix == 0 {
        0
    } else {
        u32::MAX << (32 - prefix.min(32) as u32)
    };
    u32::from(addr) & mask == u32::from(net) & mask
}

pub const UCC_ROUTER: &str = "ucc_router";
pub const SUB_ROUTER: &str = "sub_router";
pub const ATTACKER: &str = "attacker";

pub fn master_name(i: usize) -> String {
    format!("master_{i}")
}

pub fn outstation_name(i: usize) -> String {
    format!("outstation_{i}")
}

impl Topology {
    pub fn from_toml_str(s: &str) -> Result<Self, NetError> {
        let t: Topology =
            toml::from_str(s).map_err(|e| NetError::InvalidTopology(e.message().to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::InvalidTopology(m));
        let mut segs = BTreeSet::new();
        for s in &self.segments {
            s.link.validate()?;
            if !segs.insert(s.name.as_str()) {
                return bad(format!("duplicate segment {}", s.name));
            }
        }
        let mut names = BTreeSet::new();
        let mut ips = BTreeSet::new();
        for n in &self.nodes {
            if !names.insert(n.name.as_str()) {
                return bad(format!("duplicate node {}", n.name));
            }
            if n.interfaces.is_empty() {
                return bad(format!("node {} has no interfaces", n.name));
            }
            for i in &n.interfaces {
                if !segs.contains(i.segment.as_str()) {
                    return bad(format!(
                        "node {} references unknown segment {}",
                        n.name, i.segment
                    ));
                }
                if i.prefix > 32 {
                    return bad(format!("node {} has prefix length {}", n.name, i.prefix));
                }
                if !ips.insert(i.ip) {
                    return bad(format!("address {} assigned twice", i.ip));
                }
            }
        }
        for s in self
            .segments
            .iter()
            .filter(|s| s.kind == SegmentKind::PointToPoint)
        {
            let ends = self
                .nodes
                .iter()
                .flat_map(|n| &n.interfaces)
                .filter(|i| i.segment == s.name)
                .count();
            if ends != 2 {
                return bad(format!("point-to-point segment {} has {ends} ends", s.name));
            }
        }
        Ok(())
    }

    /// Control-center LAN with `masters` masters, a WAN link, and a
    /// substation LAN with `outstations` outstations plus an attacker host.
    /// Both routers tap their traffic.
    pub fn desk(masters: usize, outstations: usize, link: LinkSpec) -> Self {
        Self::desk_with_wan(masters, outstations, link, link)
    }

    /// [`Topology::desk`] with separate LAN and WAN link parameters.
    pub fn desk_with_wan(masters: usize, outstations: usize, lan: LinkSpec, wan: LinkSpec) -> Self {
        let seg = |name: &str, kind| SegmentConfig {
            name: name.into(),
            kind,
            link: if kind == SegmentKind::PointToPoint {
                wan
            } else {
                lan
            },
        };
        let iface = |segment: &str, ip: [u8; 4], prefix| InterfaceConfig {
            segment: segment.into(),
            ip: Ipv4Addr::from(ip),
            prefix,
        };
        let default_via = |via: [u8; 4]| {
            vec![RouteConfig {
                dest: Ipv4Addr::UNSPECIFIED,
                prefix: 0,
                via: Ipv4Addr::from(via),
            }]
        };
        let mut nodes = vec![
            NodeConfig {
                name: UCC_ROUTER.into(),
                kind: NodeKind::Router,
                interfaces: vec![
                    iface("ucc_lan", [172, 16, 0, 4], 24),
                    iface("wan", [192, 168, 100, 1], 30),
                ],
                routes: vec![RouteConfig {
                    dest: Ipv4Addr::new(10, 10, 1, 0),
                    prefix: 24,
                    via: Ipv4Addr::new(192, 168, 100, 2),
                }],
                tap: true,
            },
            NodeConfig {
                name: SUB_ROUTER.into(),
                kind: NodeKind::Router,
                interfaces: vec![
                    iface("wan", [192, 168, 100, 2], 30),
                    iface("sub_lan", [10, 10, 1, 1], 24),
                ],
                routes: vec![RouteConfig {
                    dest: Ipv4Addr::new(172, 16, 0, 0),
                    prefix: 24,
                    via: Ipv4Addr::new(192, 168, 100, 1),
                }],
                tap: true,
            },
        ];
        for i in 0..masters {
            nodes.push(NodeConfig {
                name: master_name(i),
                kind: NodeKind::Host,
                interfaces: vec![iface("ucc_lan", [172, 16, 0, 10 + i as u8], 24)],
                routes: default_via([172, 16, 0, 4]),
                tap: false,
            });
        }
        for i in 0..outstations {
            nodes.push(NodeConfig {
                name: outstation_name(i),
                kind: NodeKind::Host,
                interfaces: vec![iface("sub_lan", [10, 10, 1, 10 + i as u8], 24)],
                routes: default_via([10, 10, 1, 1]),
                tap: false,
            });
        }
        nodes.push(NodeConfig {
            name: ATTACKER.into(),
            kind: NodeKind::Host,
            interfaces: vec![iface("sub_lan", [10, 10, 1, 66], 24)],
            routes: default_via([10, 10, 1, 1]),
            tap: false,
        });
        Topology {
            segments: vec![
                seg("ucc_lan", SegmentKind::Shared),
                seg("wan", SegmentKind::PointToPoint),
                seg("sub_lan", SegmentKind::Shared),
            ],
            nodes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subnet_match() {
        let net = Ipv4Addr::new(10, 10, 1, 0);
        assert!(in_subnet(Ipv4Addr::new(10, 10, 1, 66), net, 24));
        assert!(!in_subnet(Ipv4Addr::new(10, 10, 2, 1), net, 24));
        assert!(in_subnet(
            Ipv4Addr::new(8, 8, 8, 8),
            Ipv4Addr::UNSPECIFIED,
            0
        ));
    }

    #[test]
    fn desk_topology_round_trips_through_toml() {
        let t = Topology::desk(5, 5, LinkSpec::default());
        t.validate().unwrap();
        let text = toml::to_string(&t).unwrap();
        assert_eq!(Topology::from_toml_str(&text).unwrap(), t);
    }

    #[test]
    fn duplicate_address_rejected() {
        let mut t = Topology::desk(1, 1, LinkSpec::default());
        t.nodes[3].interfaces[0].ip = t.nodes[2].interfaces[0].ip;
        assert!(t.validate().is_err());
    }
}

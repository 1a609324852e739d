use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::SimTime;

/// Link-layer (MAC) address of one interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkAddr(pub u32);

impl fmt::Display for LinkAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0.to_be_bytes();
        write!(
            f,
            "02:00:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3]
        )
    }
}

pub const ETH_HEADER: usize = 14;
pub const IP_HEADER: usize = 20;
pub const TCP_HEADER: usize = 20;
pub const ICMP_HEADER: usize = 8;
pub const ARP_BODY: usize = 28;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcpFlags {
    pub syn: bool,
    pub ack: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcmpKind {
    EchoRequest,
    EchoReply,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArpOp {
    Request,
    Reply,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "proto", rename_all = "snake_case")]
pub enum Protocol {
    MiniTcp {
        seq: u32,
        ack: u32,
        flags: TcpFlags,
    },
    Icmp {
        kind: IcmpKind,
        ident: u16,
        seq: u16,
    },
    Arp {
        op: ArpOp,
        sender_ip: Ipv4Addr,
        sender_mac: LinkAddr,
        target_ip: Ipv4Addr,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub id: u64,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: Protocol,
    #[serde(with = "hex_bytes")]
    pub payload: Vec<u8>,
    pub is_retransmission: bool,
    pub created_at: SimTime,
}

impl Packet {
    /// Octets on the wire, Ethernet header included.
    pub fn wire_len(&self) -> usize {
        ETH_HEADER
            + match self.protocol {
                Protocol::MiniTcp { .. } => IP_HEADER + TCP_HEADER + self.payload.len(),
                Protocol::Icmp { .. } => IP_HEADER + ICMP_HEADER + self.payload.len(),
                Protocol::Arp { .. } => ARP_BODY,
            }
    }

    pub fn tcp_seq(&self) -> Option<u32> {
        match self.protocol {
            Protocol::MiniTcp { seq, .. } => Some(seq),
            _ => None,
        }
    }

    pub fn is_tcp(&self) -> bool {
        matches!(self.protocol, Protocol::MiniTcp { .. })
    }

    pub fn uses_port(&self, port: u16) -> bool {
        self.is_tcp() && (self.src_port == port || self.dst_port == port)
    }

    pub fn is_echo_request(&self) -> bool {
        matches!(
            self.protocol,
            Protocol::Icmp {
                kind: IcmpKind::EchoRequest,
                ..
            }
        )
    }
}

/// A packet on one link hop, with its link-layer addressing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub src_mac: LinkAddr,
    pub dst_mac: LinkAddr,
    pub packet: Packet,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

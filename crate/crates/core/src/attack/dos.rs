use serde::{Deserialize, Serialize};

use crate::netsim::{
    FloodArrivals, FloodId, NetError, Network, NodeId, SimTime, SUB_ROUTER, UCC_ROUTER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DosTarget {
    #[serde(alias = "sub")]
    SubstationRouter,
    #[serde(alias = "ucc")]
    UccRouter,
}

impl DosTarget {
    pub fn label(self) -> &'static str {
        match self {
            DosTarget::SubstationRouter => "sub",
            DosTarget::UccRouter => "ucc",
        }
    }

    /// Address the flood aims at: the router interface nearest the
    /// attacker.
    pub fn address(self, net: &Network) -> Option<std::net::Ipv4Addr> {
        let (name, iface) = match self {
            DosTarget::SubstationRouter => (SUB_ROUTER, 1),
            DosTarget::UccRouter => (UCC_ROUTER, 1),
        };
        let node = net.node_id(name)?;
        net.node_ips(node).get(iface).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DosSpec {
    pub target: DosTarget,
    pub payload_size: usize,
    /// Seconds between echo requests, in network time.
    pub interval_s: f64,
    pub start_s: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub arrivals: FloodArrivals,
}

/// Starts the flood from `attacker`. A zero duration sends nothing.
pub fn dos_run(
    net: &mut Network,
    attacker: NodeId,
    spec: &DosSpec,
) -> Result<Option<FloodId>, NetError> {
    if spec.duration_s == 0.0 {
        return Ok(None);
    }
    let dst = spec
        .target
        .address(net)
        .ok_or_else(|| NetError::InvalidTopology(format!("no {} router", spec.target.label())))?;
    let start = SimTime::from_secs_f64(spec.start_s);
    let stop = SimTime::from_secs_f64(spec.start_s + spec.duration_s);
    net.icmp_flood_with(
        attacker,
        dst,
        spec.payload_size,
        spec.interval_s,
        start,
        Some(stop),
        spec.arrivals,
    )
    .map(Some)
}

/// Flood payload sizes in octets: 800 to 1800 in steps of 200.
pub fn payload_sweep() -> Vec<usize> {
    (800..=1800).step_by(200).collect()
}

/// Nominal flood intervals in milliseconds: 1500 down to 500 in steps of 100.
pub fn interval_sweep_ms() -> Vec<u64> {
    (5..=15).rev().map(|k| k * 100).collect()
}

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputSample {
    pub total_payload_bytes: u64,
    pub retransmitted_bytes: u64,
    pub total_transmission_time: f64,
    pub throughput: f64,
    pub goodput: f64,
}

impl ThroughputSample {
    /// Throughput counts every transmitted payload octet; goodput leaves out
    /// retransmitted copies.
    pub fn from_counts(total_payload_bytes: u64, retransmitted_bytes: u64, window_s: f64) -> Self {
        let (throughput, goodput) = if window_s > 0.0 {
            (
                total_payload_bytes as f64 / window_s,
                (total_payload_bytes - retransmitted_bytes) as f64 / window_s,
            )
        } else {
            (0.0, 0.0)
        };
        Self {
            total_payload_bytes,
            retransmitted_bytes,
            total_transmission_time: window_s,
            throughput,
            goodput,
        }
    }
}

/// One data-segment transmission on the monitored port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataTx {
    pub time: SimTime,
    pub bytes: u64,
    pub retransmission: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RttSample {
    /// Time the acknowledgement arrived.
    pub time: SimTime,
    pub rtt: SimTime,
    /// Retransmissions the segment needed.
    pub retransmissions: u32,
    pub src_port: u16,
    pub dst_port: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowKey {
    pub src: Ipv4Addr,
    pub src_port: u16,
    pub dst: Ipv4Addr,
    pub dst_port: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowState {
    Connecting,
    Established,
    Closed,
}

/// Client-initiated MiniTcp flows and the active-count time series.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FlowRegistry {
    pub flows: BTreeMap<FlowKey, FlowState>,
    /// (time, active count) after every change.
    pub series: Vec<(SimTime, usize)>,
}

impl FlowRegistry {
    pub fn set(&mut self, now: SimTime, key: FlowKey, state: FlowState) {
        let before = self.active();
        self.flows.insert(key, state);
        let after = self.active();
        if after != before {
            self.series.push((now, after));
        }
    }

    pub fn active(&self) -> usize {
        self.flows
            .values()
            .filter(|s| **s == FlowState::Established)
            .count()
    }

    pub fn active_at(&self, t: SimTime) -> usize {
        self.series
            .iter()
            .take_while(|(at, _)| *at <= t)
            .last()
            .map_or(0, |(_, n)| *n)
    }

    /// Source ports ever used from `src` toward `dst:dst_port`.
    pub fn source_ports(&self, src: Ipv4Addr, dst: Ipv4Addr, dst_port: u16) -> Vec<u16> {
        self.flows
            .keys()
            .filter(|k| k.src == src && k.dst == dst && k.dst_port == dst_port)
            .map(|k| k.src_port)
            .collect()
    }
}

/// Transport metrics over one time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub start: SimTime,
    pub end: SimTime,
    pub sample: ThroughputSample,
    pub rtts: Vec<RttSample>,
    pub retransmissions: u64,
    pub flow_count: usize,
}

impl Measurement {
    pub fn mean_rtt_s(&self) -> Option<f64> {
        if self.rtts.is_empty() {
            return None;
        }
        let sum: f64 = self.rtts.iter().map(|r| r.rtt.as_secs_f64()).sum();
        Some(sum / self.rtts.len() as f64)
    }
}

pub(crate) fn measure(
    txs: &[DataTx],
    rtts: &[RttSample],
    flows: &FlowRegistry,
    start: SimTime,
    end: SimTime,
) -> Measurement {
    let in_window = |t: SimTime| t >= start && t < end;
    let mut total = 0;
    let mut retrans = 0;
    let mut count = 0;
    for tx in txs.iter().filter(|tx| in_window(tx.time)) {
        total += tx.bytes;
        if tx.retransmission {
            retrans += tx.bytes;
            count += 1;
        }
    }
    Measurement {
        start,
        end,
        sample: ThroughputSample::from_counts(total, retrans, (end - start).as_secs_f64()),
        rtts: rtts.iter().filter(|r| in_window(r.time)).copied().collect(),
        retransmissions: count,
        flow_count: flows.active_at(end),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tx(ms: u64, bytes: u64, retransmission: bool) -> DataTx {
        DataTx {
            time: SimTime::from_millis(ms),
            bytes,
            retransmission,
        }
    }

    #[test]
    fn throughput_is_bytes_over_window() {
        let txs: Vec<_> = (0..10).map(|i| tx(i * 1000, 500, false)).collect();
        let m = measure(
            &txs,
            &[],
            &FlowRegistry::default(),
            SimTime::ZERO,
            SimTime::from_millis(10_000),
        );
        assert_eq!(m.sample.total_payload_bytes, 5000);
        assert_eq!(m.sample.throughput, 500.0);
        assert_eq!(m.sample.goodput, m.sample.throughput);
    }

    #[test]
    fn goodput_excludes_retransmitted_copies() {
        let txs = [tx(0, 1000, false), tx(200, 1000, true)];
        let m = measure(
            &txs,
            &[],
            &FlowRegistry::default(),
            SimTime::ZERO,
            SimTime::from_millis(10_000),
        );
        assert_eq!(m.sample.throughput, 200.0);
        assert_eq!(m.sample.goodput, 100.0);
        assert_eq!(m.retransmissions, 1);
    }

    #[test]
    fn registry_counts_established_only() {
        let mut reg = FlowRegistry::default();
        let key = |port| FlowKey {
            src: Ipv4Addr::new(1, 1, 1, 1),
            src_port: port,
            dst: Ipv4Addr::new(2, 2, 2, 2),
            dst_port: 20000,
        };
        reg.set(SimTime(1), key(40000), FlowState::Connecting);
        assert_eq!(reg.active(), 0);
        reg.set(SimTime(2), key(40000), FlowState::Established);
        reg.set(SimTime(3), key(40000), FlowState::Closed);
        reg.set(SimTime(4), key(40001), FlowState::Established);
        assert_eq!(reg.active(), 1);
        assert_eq!(reg.active_at(SimTime(3)), 0);
        assert_eq!(
            reg.series,
            vec![(SimTime(2), 1), (SimTime(3), 0), (SimTime(4), 1)]
        );
        assert_eq!(
            reg.source_ports(Ipv4Addr::new(1, 1, 1, 1), Ipv4Addr::new(2, 2, 2, 2), 20000),
            vec![40000, 40001]
        );
    }
}

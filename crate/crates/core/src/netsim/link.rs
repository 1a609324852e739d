use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{NetError, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub bandwidth_bps: u64,
    pub propagation_delay_s: f64,
    /// Frames that may wait behind the one being serialized.
    pub queue_capacity: usize,
}

impl Default for LinkSpec {
    fn default() -> Self {
        Self {
            bandwidth_bps: 10_000_000,
            propagation_delay_s: 160e-6,
            queue_capacity: 32,
        }
    }
}

impl LinkSpec {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.bandwidth_bps == 0 {
            return Err(NetError::InvalidLink("bandwidth must be positive".into()));
        }
        if !(self.propagation_delay_s >= 0.0) {
            return Err(NetError::InvalidLink(
                "propagation delay must be >= 0".into(),
            ));
        }
        if self.queue_capacity == 0 {
            return Err(NetError::InvalidLink("queue capacity must be >= 1".into()));
        }
        Ok(())
    }

    /// Serialization time, rounded up to the next nanosecond.
    pub fn serialization(&self, octets: usize) -> SimTime {
        let bits = octets as u128 * 8 * 1_000_000_000;
        let bw = self.bandwidth_bps as u128;
        SimTime(bits.div_ceil(bw) as u64)
    }

    pub fn propagation(&self) -> SimTime {
        SimTime::from_secs_f64(self.propagation_delay_s)
    }

    /// Latency of a frame on an idle link.
    pub fn one_way_latency(&self, octets: usize) -> SimTime {
        self.serialization(octets) + self.propagation()
    }
}

/// One transmit FIFO: a point-to-point direction or a whole shared medium.
#[derive(Debug, Clone)]
pub(crate) struct Channel {
    spec: LinkSpec,
    busy_until: SimTime,
    /// Start times of frames still waiting for the transmitter.
    waiting: VecDeque<SimTime>,
}

impl Channel {
    pub fn new(spec: LinkSpec) -> Self {
        Self {
            spec,
            busy_until: SimTime::ZERO,
            waiting: VecDeque::new(),
        }
    }

    /// Admits a frame offered at `now`, returning its arrival time at the far
    /// end, or `None` when the queue is full (tail drop).
    pub fn offer(&mut self, now: SimTime, octets: usize) -> Option<SimTime> {
        while self.waiting.front().is_some_and(|&s| s <= now) {
            self.waiting.pop_front();
        }
        let start = self.busy_until.max(now);
        if start > now {
            if self.waiting.len() >= self.spec.queue_capacity {
                return None;
            }
            self.waiting.push_back(start);
        }
        let done = start + self.spec.serialization(octets);
        self.busy_until = done;
        Some(done + self.spec.propagation())
    }
}

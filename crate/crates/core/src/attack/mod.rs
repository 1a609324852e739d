//! Adversary models: the in-path rewriter reached by ARP poisoning, the
//! ICMP flood driver, and the attempt and load analytics.

mod analytics;
mod dos;
mod mitm;
mod policy;

pub use analytics::{
    expected_steps, operation_sequence, simulate_attempts, traffic_intensity, AttackAnalyticsInput,
    AttemptStats, Probabilities,
};
pub use dos::{dos_run, interval_sweep_ms, payload_sweep, DosSpec, DosTarget};
pub use mitm::{
    classify, classify_payload, mitm_mask, Adversary, AdversaryStats, Decision, MutationRecord,
    Mutator, PointChange, FORWARD_TIMER, SERVICE_TIMER,
};
pub use policy::{AttackPolicy, PacketClass, Targets, UseCase};

use crate::grid::DeviceId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AttackError {
    #[error("invalid attack policy: {0}")]
    InvalidPolicy(String),
    #[error("{} requires probability {name}", use_case.label())]
    MissingProbability {
        use_case: UseCase,
        name: &'static str,
    },
    #[error("success probability for {0:?} packets is zero")]
    ZeroProbability(PacketClass),
    #[error("rates must be non-negative with a positive service rate")]
    InvalidRate,
    #[error("target {0} has no mapped point")]
    UnmappedTarget(DeviceId),
}

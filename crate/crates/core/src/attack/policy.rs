use serde::{Deserialize, Serialize};

use crate::grid::{BranchId, GenId};

use super::AttackError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UseCase {
    #[serde(rename = "UC1")]
    Uc1,
    #[serde(rename = "UC2")]
    Uc2,
    #[serde(rename = "UC3")]
    Uc3,
    #[serde(rename = "UC4")]
    Uc4,
}

impl UseCase {
    pub fn label(self) -> &'static str {
        match self {
            UseCase::Uc1 => "UC1",
            UseCase::Uc2 => "UC2",
            UseCase::Uc3 => "UC3",
            UseCase::Uc4 => "UC4",
        }
    }
}

/// What the adversary makes of an intercepted packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketClass {
    /// Binary-output command (CROB).
    Bo,
    /// Analog-output command (setpoint).
    Ao,
    /// Read response carrying measurements.
    Rr,
    Other,
}

impl PacketClass {
    pub fn is_command(self) -> bool {
        matches!(self, PacketClass::Bo | PacketClass::Ao)
    }
}

/// Grid devices whose points the adversary rewrites.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Targets {
    /// Breakers whose CLOSE commands become TRIP.
    #[serde(default)]
    pub breakers: Vec<BranchId>,
    /// Generators whose setpoints and output readings are rewritten.
    #[serde(default)]
    pub generators: Vec<GenId>,
    /// Branches whose flow readings are falsified.
    #[serde(default)]
    pub flows: Vec<BranchId>,
}

fn default_fci_delay() -> f64 {
    0.12
}
fn default_fdi_delay() -> f64 {
    0.17
}
fn default_service_rate() -> f64 {
    100.0
}
fn default_buffer() -> usize {
    64
}
fn default_coupling() -> f64 {
    0.5
}
fn default_window() -> f64 {
    10.0
}
fn default_fdi_gen() -> f64 {
    20.0
}
fn default_fdi_flow() -> f64 {
    3000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackPolicy {
    pub use_case: UseCase,
    #[serde(default)]
    pub targets: Targets,
    /// Success probability for binary-output mutations.
    pub p: Option<f64>,
    /// Success probability for analog-output mutations.
    pub q: Option<f64>,
    /// Success probability for read-response mutations.
    pub r: Option<f64>,
    #[serde(default = "default_fci_delay")]
    pub fci_processing_delay_s: f64,
    #[serde(default = "default_fdi_delay")]
    pub fdi_processing_delay_s: f64,
    /// Packets per second the adversary can relay untouched.
    #[serde(default = "default_service_rate")]
    pub service_rate_pps: f64,
    /// Ingress buffer size; arrivals beyond it are lost.
    #[serde(default = "default_buffer")]
    pub buffer_capacity: usize,
    /// Effective success probability is `base * max(0, 1 - coupling * rho)`.
    #[serde(default = "default_coupling")]
    pub load_coupling: f64,
    /// Window over which the arrival rate is estimated.
    #[serde(default = "default_window")]
    pub load_window_s: f64,
    #[serde(default = "default_fdi_gen")]
    pub fdi_gen_reading_mw: f64,
    #[serde(default = "default_fdi_flow")]
    pub fdi_flow_reading_mw: f64,
    /// Value forced into targeted setpoint commands. Defaults to 20 MW in
    /// UC3 and 0 MW otherwise.
    #[serde(default)]
    pub forced_setpoint_mw: Option<f64>,
    /// Forward rewritten frames with their original, now stale, CRCs.
    #[serde(default)]
    pub skip_crc: bool,
}

impl AttackPolicy {
    /// A policy with the documented defaults and p = q = 0.8, r = 0.6.
    pub fn new(use_case: UseCase, targets: Targets) -> Self {
        Self {
            use_case,
            targets,
            p: Some(0.8),
            q: Some(0.8),
            r: Some(0.6),
            fci_processing_delay_s: default_fci_delay(),
            fdi_processing_delay_s: default_fdi_delay(),
            service_rate_pps: default_service_rate(),
            buffer_capacity: default_buffer(),
            load_coupling: default_coupling(),
            load_window_s: default_window(),
            fdi_gen_reading_mw: default_fdi_gen(),
            fdi_flow_reading_mw: default_fdi_flow(),
            forced_setpoint_mw: None,
            skip_crc: false,
        }
    }

    /// Probability names this use case needs.
    pub fn required_probabilities(use_case: UseCase) -> &'static [&'static str] {
        match use_case {
            UseCase::Uc1 => &["p"],
            UseCase::Uc2 => &["p", "q"],
            UseCase::Uc3 | UseCase::Uc4 => &["p", "q", "r"],
        }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        let bad =
            |field: &str, why: &str| Err(AttackError::InvalidPolicy(format!("{field}: {why}")));
        for (name, v) in [("p", self.p), ("q", self.q), ("r", self.r)] {
            match v {
                Some(x) if !(0.0..=1.0).contains(&x) => return bad(name, "must lie in [0, 1]"),
                None if Self::required_probabilities(self.use_case).contains(&name) => {
                    return Err(AttackError::MissingProbability {
                        use_case: self.use_case,
                        name,
                    })
                }
                _ => {}
            }
        }
        if !(self.fci_processing_delay_s >= 0.0) {
            return bad("fci_processing_delay_s", "must be >= 0");
        }
        if !(self.fdi_processing_delay_s >= self.fci_processing_delay_s) {
            return bad(
                "fdi_processing_delay_s",
                "must be >= fci_processing_delay_s",
            );
        }
        if !(self.service_rate_pps > 0.0) {
            return bad("service_rate_pps", "must be > 0");
        }
        if self.buffer_capacity == 0 {
            return bad("buffer_capacity", "must be >= 1");
        }
        if !(self.load_coupling >= 0.0) {
            return bad("load_coupling", "must be >= 0");
        }
        if !(self.load_window_s > 0.0) {
            return bad("load_window_s", "must be > 0");
        }
        Ok(())
    }

    pub fn forced_setpoint(&self) -> f64 {
        self.forced_setpoint_mw.unwrap_or(match self.use_case {
            UseCase::Uc3 => self.fdi_gen_reading_mw,
            _ => 0.0,
        })
    }

    /// Base probability for a class, or 1 when unset.
    pub fn base_probability(&self, class: PacketClass) -> f64 {
        match class {
            PacketClass::Bo => self.p,
            PacketClass::Ao => self.q,
            PacketClass::Rr => self.r,
            PacketClass::Other => None,
        }
        .unwrap_or(1.0)
    }

    /// Processing time spent on a packet of this class when it is a
    /// mutation target.
    pub fn processing_delay(&self, class: PacketClass) -> f64 {
        match class {
            PacketClass::Bo | PacketClass::Ao => self.fci_processing_delay_s,
            PacketClass::Rr => self.fdi_processing_delay_s,
            PacketClass::Other => 1.0 / self.service_rate_pps,
        }
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{AttackError, AttackPolicy, DosTarget, UseCase};
use crate::grid::{BranchId, GenId, GridModel};
use crate::ids::Ruleset;
use crate::netsim::{
    master_name, outstation_name, FloodArrivals, LinkSpec, LogLevel, TcpConfig, Topology, ATTACKER,
    SUB_ROUTER, UCC_ROUTER,
};
use crate::scada::{AutomationPolicy, CommandMode, MasterConfig, PointMap};

use super::builtin;

/// A configuration problem, located by its dotted field path.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{field}: {reason}")]
pub struct ValidationError {
    pub field: String,
    pub reason: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, reason: impl ToString) -> Self {
        Self {
            field: field.into(),
            reason: reason.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    #[serde(rename = "BASELINE")]
    Baseline,
    #[serde(rename = "UC1")]
    Uc1,
    #[serde(rename = "UC2")]
    Uc2,
    #[serde(rename = "UC3")]
    Uc3,
    #[serde(rename = "UC4")]
    Uc4,
    #[serde(rename = "DOS_PAYLOAD_SWEEP")]
    DosPayloadSweep,
    #[serde(rename = "DOS_INTERVAL_SWEEP")]
    DosIntervalSweep,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 7] = [
        ScenarioId::Baseline,
        ScenarioId::Uc1,
        ScenarioId::Uc2,
        ScenarioId::Uc3,
        ScenarioId::Uc4,
        ScenarioId::DosPayloadSweep,
        ScenarioId::DosIntervalSweep,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ScenarioId::Baseline => "BASELINE",
            ScenarioId::Uc1 => "UC1",
            ScenarioId::Uc2 => "UC2",
            ScenarioId::Uc3 => "UC3",
            ScenarioId::Uc4 => "UC4",
            ScenarioId::DosPayloadSweep => "DOS_PAYLOAD_SWEEP",
            ScenarioId::DosIntervalSweep => "DOS_INTERVAL_SWEEP",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.label().eq_ignore_ascii_case(s))
    }

    pub fn use_case(self) -> Option<UseCase> {
        match self {
            ScenarioId::Uc1 => Some(UseCase::Uc1),
            ScenarioId::Uc2 => Some(UseCase::Uc2),
            ScenarioId::Uc3 => Some(UseCase::Uc3),
            ScenarioId::Uc4 => Some(UseCase::Uc4),
            _ => None,
        }
    }

    pub fn is_sweep(self) -> bool {
        matches!(
            self,
            ScenarioId::DosPayloadSweep | ScenarioId::DosIntervalSweep
        )
    }
}

fn d_duration() -> f64 {
    300.0
}
fn d_compression() -> f64 {
    10.0
}
fn d_one() -> usize {
    1
}
fn d_monitored() -> Vec<BranchId> {
    [2, 4, 10, 15, 16].into_iter().map(BranchId).collect()
}
fn d_grid_step() -> f64 {
    1.0
}
fn d_window() -> f64 {
    30.0
}

/// Master behaviour shared by every master in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MasterSection {
    /// Scenario seconds between polls.
    pub poll_interval_s: f64,
    pub command_mode: CommandMode,
    /// Network seconds before an unanswered request is sent again.
    pub response_timeout_s: f64,
    /// Upper bound of the uniform delay added to each poll, network seconds.
    pub poll_jitter_s: f64,
}

impl Default for MasterSection {
    fn default() -> Self {
        Self {
            poll_interval_s: 30.0,
            command_mode: CommandMode::DirectOperate,
            response_timeout_s: 2.0,
            poll_jitter_s: 0.02,
        }
    }
}

/// Commands the operator issues on a fixed schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutineConfig {
    pub period_s: f64,
    #[serde(default)]
    pub offset_s: f64,
    /// Generators whose nominal setpoints are re-sent.
    #[serde(default)]
    pub setpoints: Vec<GenId>,
    /// Breakers that receive a CLOSE.
    #[serde(default)]
    pub breakers: Vec<BranchId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    /// Scenario second at which the adversary poisons ARP caches.
    pub start_s: f64,
    pub policy: AttackPolicy,
}

fn d_scale() -> f64 {
    0.002
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DosSection {
    pub target: DosTarget,
    pub payload_size: usize,
    /// Nominal interval between echo requests, milliseconds.
    pub interval_ms: f64,
    /// Scenario seconds.
    pub start_s: f64,
    /// Scenario seconds.
    pub duration_s: f64,
    /// Factor applied to the nominal interval to get the network-time
    /// interval actually used.
    #[serde(default = "d_scale")]
    pub interval_scale: f64,
    #[serde(default)]
    pub arrivals: FloodArrivals,
}

impl DosSection {
    pub fn network_interval_s(&self) -> f64 {
        self.interval_ms / 1000.0 * self.interval_scale
    }
}

fn d_seeds() -> usize {
    5
}
fn d_targets() -> Vec<DosTarget> {
    vec![DosTarget::SubstationRouter, DosTarget::UccRouter]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "d_seeds")]
    pub seeds: usize,
    #[serde(default = "d_targets")]
    pub targets: Vec<DosTarget>,
    /// Explicit trial values (payload octets or interval milliseconds);
    /// empty means the standard sweep.
    #[serde(default)]
    pub values: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            seeds: d_seeds(),
            targets: d_targets(),
            values: vec![],
        }
    }
}

/// Everything a run needs, as written in a scenario file. Times are
/// scenario seconds unless a field says otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: ScenarioId,
    pub seed: u64,
    #[serde(default = "d_duration")]
    pub duration_s: f64,
    /// Scenario seconds per network second.
    #[serde(default = "d_compression")]
    pub time_compression: f64,
    #[serde(default = "d_one")]
    pub masters: usize,
    /// Grid file; the built-in desk grid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    /// Topology file; the desk topology when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<String>,
    /// Point map file shared by all outstations; derived from the grid
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_map: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ruleset: Option<String>,
    /// Branches whose flows the derived point map reports.
    #[serde(default = "d_monitored")]
    pub monitored_flows: Vec<BranchId>,
    /// LAN segments, and the WAN too unless `wan_link` is set.
    #[serde(default)]
    pub link: LinkSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wan_link: Option<LinkSpec>,
    #[serde(default)]
    pub tcp: TcpConfig,
    #[serde(default)]
    pub log_level: LogLevel,
    #[serde(default)]
    pub master: MasterSection,
    #[serde(default = "d_grid_step")]
    pub grid_step_s: f64,
    #[serde(default = "d_window")]
    pub metrics_window_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub automation: Option<AutomationPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routine: Option<RoutineConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dos: Option<DosSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ValidationError> {
        toml::from_str(s).map_err(|e| {
            let field = e
                .span()
                .map(|sp| {
                    let upto = &s[..sp.start.min(s.len())];
                    upto.lines()
                        .last()
                        .unwrap_or("")
                        .split('=')
                        .next()
                        .unwrap_or("")
                        .trim()
                        .to_string()
                })
                .filter(|f| !f.is_empty())
                .unwrap_or_else(|| "<root>".into());
            ValidationError::new(field, e.message())
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn master_config(&self, i: usize) -> MasterConfig {
        MasterConfig {
            poll_interval_s: self.master.poll_interval_s,
            command_mode: self.master.command_mode,
            master_address: 1 + i as u16,
            outstation_address: 100 + i as u16,
            response_timeout_s: self.master.response_timeout_s,
        }
    }
}

/// A validated scenario with every referenced file loaded.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub grid: GridModel,
    pub topology: Topology,
    pub map: PointMap,
    pub ruleset: Ruleset,
}

fn read_ref(base: &Path, field: &str, rel: &str) -> Result<String, ValidationError> {
    let p: PathBuf = base.join(rel);
    std::fs::read_to_string(&p)
        .map_err(|e| ValidationError::new(field, format!("{}: {e}", p.display())))
}

fn positive(field: &str, v: f64) -> Result<(), ValidationError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ValidationError::new(field, "must be > 0"))
    }
}

impl Scenario {
    /// Resolves file references against `base` and validates everything.
    pub fn resolve(config: ScenarioConfig, base: &Path) -> Result<Self, ValidationError> {
        let c = &config;
        positive("duration_s", c.duration_s)?;
        positive("time_compression", c.time_compression)?;
        positive("grid_step_s", c.grid_step_s)?;
        positive("metrics_window_s", c.metrics_window_s)?;
        if !(1..=64).contains(&c.masters) {
            return Err(ValidationError::new("masters", "must be in 1..=64"));
        }
        positive("master.poll_interval_s", c.master.poll_interval_s)?;
        positive("master.response_timeout_s", c.master.response_timeout_s)?;
        if !(c.master.poll_jitter_s >= 0.0) {
            return Err(ValidationError::new("master.poll_jitter_s", "must be >= 0"));
        }
        c.link
            .validate()
            .map_err(|e| ValidationError::new("link", e))?;
        if let Some(w) = &c.wan_link {
            w.validate()
                .map_err(|e| ValidationError::new("wan_link", e))?;
        }
        positive("tcp.rto_s", c.tcp.rto_s)?;

        let grid = match &c.grid {
            Some(rel) => GridModel::from_toml_str(&read_ref(base, "grid", rel)?),
            None => GridModel::from_toml_str(builtin::DESK_GRID),
        }
        .map_err(|e| ValidationError::new("grid", e))?;
        for b in &c.monitored_flows {
            if grid.branch(*b).is_none() {
                return Err(ValidationError::new(
                    "monitored_flows",
                    format!("unknown branch {b}"),
                ));
            }
        }
        let topology = match &c.topology {
            Some(rel) => Topology::from_toml_str(&read_ref(base, "topology", rel)?)
                .map_err(|e| ValidationError::new("topology", e))?,
            None => {
                Topology::desk_with_wan(c.masters, c.masters, c.link, c.wan_link.unwrap_or(c.link))
            }
        };
        topology
            .validate()
            .map_err(|e| ValidationError::new("topology", e))?;
        let mut names: Vec<String> = vec![UCC_ROUTER.into(), SUB_ROUTER.into(), ATTACKER.into()];
        names.extend((0..c.masters).flat_map(|i| [master_name(i), outstation_name(i)]));
        for n in names {
            if !topology.nodes.iter().any(|node| node.name == n) {
                return Err(ValidationError::new(
                    "topology",
                    format!("missing node {n}"),
                ));
            }
        }
        let map = match &c.point_map {
            Some(rel) => PointMap::from_toml_str(&read_ref(base, "point_map", rel)?)
                .map_err(|e| ValidationError::new("point_map", e))?,
            None => PointMap::for_grid(&grid, &c.monitored_flows),
        };
        map.validate(&grid)
            .map_err(|e| ValidationError::new("point_map", e))?;
        let ruleset = match &c.ruleset {
            Some(rel) => Ruleset::from_toml_str(&read_ref(base, "ruleset", rel)?)
                .map_err(|e| ValidationError::new("ruleset", e))?,
            None => Ruleset::default(),
        };
        for i in 0..c.masters {
            c.master_config(i)
                .validate()
                .map_err(|e| ValidationError::new("master", e))?;
        }
        if let Some(a) = &c.automation {
            a.validate()
                .map_err(|e| ValidationError::new("automation", e))?;
        }
        if let Some(r) = &c.routine {
            positive("routine.period_s", r.period_s)?;
            for g in &r.setpoints {
                if map.setpoint_index(*g).is_none() {
                    return Err(ValidationError::new(
                        "routine.setpoints",
                        format!("{g} has no setpoint point"),
                    ));
                }
            }
            for b in &r.breakers {
                if map.breaker_index(*b).is_none() {
                    return Err(ValidationError::new(
                        "routine.breakers",
                        format!("{b} has no breaker point"),
                    ));
                }
            }
        }
        Self::validate_attack(c, &map)?;
        Self::validate_dos(c)?;
        Ok(Self {
            config,
            grid,
            topology,
            map,
            ruleset,
        })
    }

    fn validate_attack(c: &ScenarioConfig, map: &PointMap) -> Result<(), ValidationError> {
        let Some(a) = &c.attack else {
            if c.id.use_case().is_some() {
                return Err(ValidationError::new(
                    "attack",
                    format!("{} needs an attack section", c.id.label()),
                ));
            }
            return Ok(());
        };
        if let Some(uc) = c.id.use_case() {
            if a.policy.use_case != uc {
                return Err(ValidationError::new(
                    "attack.policy.use_case",
                    format!(
                        "scenario is {} but policy is {}",
                        c.id.label(),
                        a.policy.use_case.label()
                    ),
                ));
            }
        }
        if !(a.start_s >= 0.0) {
            return Err(ValidationError::new("attack.start_s", "must be >= 0"));
        }
        a.policy.validate().map_err(|e| match e {
            AttackError::MissingProbability { name, .. } => {
                ValidationError::new(format!("attack.policy.{name}"), e)
            }
            other => ValidationError::new("attack.policy", other),
        })?;
        crate::attack::Mutator::new(a.policy.clone(), map)
            .map_err(|e| ValidationError::new("attack.policy.targets", e))?;
        Ok(())
    }

    fn validate_dos(c: &ScenarioConfig) -> Result<(), ValidationError> {
        if c.id.is_sweep() && c.dos.is_none() {
            return Err(ValidationError::new(
                "dos",
                format!("{} needs a dos section", c.id.label()),
            ));
        }
        if let Some(d) = &c.dos {
            if d.payload_size == 0 {
                return Err(ValidationError::new("dos.payload_size", "must be >= 1"));
            }
            positive("dos.interval_ms", d.interval_ms)?;
            positive("dos.interval_scale", d.interval_scale)?;
            if !(d.start_s >= 0.0) || !(d.duration_s >= 0.0) {
                return Err(ValidationError::new(
                    "dos",
                    "start_s and duration_s must be >= 0",
                ));
            }
        }
        if let Some(s) = &c.sweep {
            if s.seeds == 0 {
                return Err(ValidationError::new("sweep.seeds", "must be >= 1"));
            }
            if s.targets.is_empty() {
                return Err(ValidationError::new("sweep.targets", "must not be empty"));
            }
        }
        Ok(())
    }
}

/// Reads and validates a scenario file; relative references resolve
/// against the file's directory.
pub fn load_config(path: &Path) -> Result<Scenario, ValidationError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ValidationError::new("<file>", format!("{}: {e}", path.display())))?;
    let config = ScenarioConfig::from_toml_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Scenario::resolve(config, base)
}

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GridError;

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(BusId, "bus");
id_type!(BranchId, "br");
id_type!(GenId, "gen");
id_type!(LoadId, "load");

/// Any switchable or measurable device in the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum DeviceId {
    Branch(BranchId),
    Generator(GenId),
    Load(LoadId),
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeviceId::Branch(id) => id.fmt(f),
            DeviceId::Generator(id) => id.fmt(f),
            DeviceId::Load(id) => id.fmt(f),
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    #[serde(default)]
    pub is_slack: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: BranchId,
    pub from: BusId,
    pub to: BusId,
    /// Series reactance, per unit.
    pub reactance: f64,
    pub limit_mw: f64,
    #[serde(default = "yes")]
    pub breaker_closed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: GenId,
    pub bus: BusId,
    pub setpoint_mw: f64,
    pub output_mw: f64,
    pub max_mw: f64,
    /// Maximum output change per second of simulated time.
    pub ramp_mw_per_s: f64,
    #[serde(default = "yes")]
    pub in_service: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub id: LoadId,
    pub bus: BusId,
    pub demand_mw: f64,
    #[serde(default = "yes")]
    pub in_service: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Buses, branches, generators and loads of a lossless DC network.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GridModel {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub loads: Vec<Load>,
}

impl GridModel {
    pub fn from_toml_str(s: &str) -> Result<Self, GridError> {
        let model: GridModel =
            toml::from_str(s).map_err(|e| GridError::Invalid(e.message().to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self, GridError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| GridError::Invalid(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("grid model serialises")
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let invalid = |msg: String| Err(GridError::Invalid(msg));
        let slack = self.buses.iter().filter(|b| b.is_slack).count();
        if slack != 1 {
            return invalid(format!("expected exactly one slack bus, found {slack}"));
        }
        let mut buses = BTreeSet::new();
        for b in &self.buses {
            if !buses.insert(b.id) {
                return invalid(format!("duplicate bus {}", b.id));
            }
        }
        let mut seen = BTreeSet::new();
        for br in &self.branches {
            if !seen.insert(br.id) {
                return invalid(format!("duplicate branch {}", br.id));
            }
            if !buses.contains(&br.from) || !buses.contains(&br.to) {
                return invalid(format!("branch {} references a missing bus", br.id));
            }
            if br.from == br.to {
                return invalid(format!("branch {} is a self-loop", br.id));
            }
            if !(br.reactance > 0.0) {
                return invalid(format!("branch {} reactance must be positive", br.id));
            }
            if !(br.limit_mw > 0.0) {
                return invalid(format!("branch {} limit must be positive", br.id));
            }
        }
        let mut seen = BTreeSet::new();
        for g in &self.generators {
            if !seen.insert(g.id) {
                return invalid(format!("duplicate generator {}", g.id));
            }
            if !buses.contains(&g.bus) {
                return invalid(format!("generator {} references a missing bus", g.id));
            }
            if !(g.max_mw >= 0.0) || !(g.ramp_mw_per_s > 0.0) {
                return invalid(format!("generator {} needs max >= 0 and ramp > 0", g.id));
            }
        }
        let mut seen = BTreeSet::new();
        for l in &self.loads {
            if !seen.insert(l.id) {
                return invalid(format!("duplicate load {}", l.id));
            }
            if !buses.contains(&l.bus) {
                return invalid(format!("load {} references a missing bus", l.id));
            }
        }
        Ok(())
    }

    pub fn slack_bus(&self) -> BusId {
        self.buses
            .iter()
            .find(|b| b.is_slack)
            .map(|b| b.id)
            .expect("validated model has a slack bus")
    }

    /// In-service generator that absorbs the power imbalance.
    pub fn slack_generator(&self) -> Option<GenId> {
        let slack = self.slack_bus();
        self.generators
            .iter()
            .filter(|g| g.bus == slack && g.in_service)
            .map(|g| g.id)
            .min()
    }

    pub fn branch(&self, id: BranchId) -> Option<&Branch> {
        self.branches.iter().find(|b| b.id == id)
    }

    pub fn branch_mut(&mut self, id: BranchId) -> Option<&mut Branch> {
        self.branches.iter_mut().find(|b| b.id == id)
    }

    pub fn generator(&self, id: GenId) -> Option<&Generator> {
        self.generators.iter().find(|g| g.id == id)
    }

    pub fn generator_mut(&mut self, id: GenId) -> Option<&mut Generator> {
        self.generators.iter_mut().find(|g| g.id == id)
    }

    pub fn load_mut(&mut self, id: LoadId) -> Option<&mut Load> {
        self.loads.iter_mut().find(|l| l.id == id)
    }

    pub fn contains(&self, device: DeviceId) -> bool {
        match device {
            DeviceId::Branch(id) => self.branch(id).is_some(),
            DeviceId::Generator(id) => self.generator(id).is_some(),
            DeviceId::Load(id) => self.loads.iter().any(|l| l.id == id),
        }
    }

    /// Copy with the given branches opened.
    pub fn with_open(&self, open: &[BranchId]) -> GridModel {
        let mut m = self.clone();
        for br in &mut m.branches {
            if open.contains(&br.id) {
                br.breaker_closed = false;
            }
        }
        m
    }
}

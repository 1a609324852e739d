use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::model::{BranchId, BusId, DeviceId, GenId, GridModel};
use super::GridError;

/// Solved operating point.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GridState {
    /// Signed MW, positive from `from` to `to`. Zero for open branches and
    /// branches outside the slack island.
    pub flows: BTreeMap<BranchId, f64>,
    pub outputs: BTreeMap<GenId, f64>,
    pub statuses: BTreeMap<DeviceId, bool>,
    /// Bus voltage angles scaled by the MVA base (so that flow = dθ / x).
    pub angles: BTreeMap<BusId, f64>,
    pub solved_ok: bool,
    pub islanded: bool,
}

impl GridState {
    pub fn flow(&self, id: BranchId) -> f64 {
        self.flows.get(&id).copied().unwrap_or(0.0)
    }

    pub fn output(&self, id: GenId) -> f64 {
        self.outputs.get(&id).copied().unwrap_or(0.0)
    }

    pub fn status(&self, id: DeviceId) -> bool {
        self.statuses.get(&id).copied().unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverloadEntry {
    pub branch: BranchId,
    pub flow_mw: f64,
    pub limit_mw: f64,
    pub loading_pct: f64,
}

/// Branches whose |flow| strictly exceeds their limit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OverloadReport {
    pub entries: Vec<OverloadEntry>,
}

impl OverloadReport {
    pub fn from_state(model: &GridModel, state: &GridState) -> Self {
        let entries = model
            .branches
            .iter()
            .filter(|b| b.breaker_closed)
            .filter_map(|b| {
                let flow = state.flow(b.id);
                (flow.abs() > b.limit_mw).then(|| OverloadEntry {
                    branch: b.id,
                    flow_mw: flow,
                    limit_mw: b.limit_mw,
                    loading_pct: 100.0 * flow.abs() / b.limit_mw,
                })
            })
            .collect();
        Self { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, branch: BranchId) -> bool {
        self.entries.iter().any(|e| e.branch == branch)
    }
}

/// Index bookkeeping shared by the solver and LODF computation.
pub(crate) struct Network {
    pub bus_index: BTreeMap<BusId, usize>,
    pub in_island: Vec<bool>,
    /// Position in the reduced system for each island bus other than slack.
    pub reduced: Vec<Option<usize>>,
    pub injection: Vec<f64>,
}

impl Network {
    pub fn build(model: &GridModel) -> Self {
        let bus_index: BTreeMap<BusId, usize> = model
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect();
        let n = model.buses.len();
        let slack = bus_index[&model.slack_bus()];

        let mut adjacency = vec![Vec::new(); n];
        for br in model.branches.iter().filter(|b| b.breaker_closed) {
            let (f, t) = (bus_index[&br.from], bus_index[&br.to]);
            adjacency[f].push(t);
            adjacency[t].push(f);
        }
        let mut in_island = vec![false; n];
        in_island[slack] = true;
        let mut queue = VecDeque::from([slack]);
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if !in_island[v] {
                    in_island[v] = true;
                    queue.push_back(v);
                }
            }
        }

        let mut reduced = vec![None; n];
        let mut next = 0;
        for i in 0..n {
            if in_island[i] && i != slack {
                reduced[i] = Some(next);
                next += 1;
            }
        }

        let mut injection = vec![0.0; n];
        let slack_gen = model.slack_generator();
        for g in model.generators.iter().filter(|g| g.in_service) {
            if Some(g.id) != slack_gen {
                injection[bus_index[&g.bus]] += g.output_mw;
            }
        }
        for l in model.loads.iter().filter(|l| l.in_service) {
            injection[bus_index[&l.bus]] -= l.demand_mw;
        }

        Self {
            bus_index,
            in_island,
            reduced,
            injection,
        }
    }

    pub fn reduced_len(&self) -> usize {
        self.reduced.iter().flatten().count()
    }

    /// Reduced susceptance matrix over island buses, slack removed.
    pub fn susceptance(&self, model: &GridModel) -> DMatrix<f64> {
        let m = self.reduced_len();
        let mut b = DMatrix::zeros(m, m);
        for br in model.branches.iter().filter(|b| b.breaker_closed) {
            let (f, t) = (self.bus_index[&br.from], self.bus_index[&br.to]);
            if !self.in_island[f] {
                continue;
            }
            let y = 1.0 / br.reactance;
            if let Some(i) = self.reduced[f] {
                b[(i, i)] += y;
            }
            if let Some(j) = self.reduced[t] {
                b[(j, j)] += y;
            }
            if let (Some(i), Some(j)) = (self.reduced[f], self.reduced[t]) {
                b[(i, j)] -= y;
                b[(j, i)] -= y;
            }
        }
        b
    }
}

fn solve_spd(b: DMatrix<f64>, rhs: DVector<f64>) -> Option<DVector<f64>> {
    if b.nrows() == 0 {
        return Some(rhs);
    }
    match b.clone().cholesky() {
        Some(ch) => Some(ch.solve(&rhs)),
        None => b.lu().solve(&rhs),
    }
}

/// Lossless DC power flow. The slack generator absorbs the imbalance of the
/// slack island; buses cut off from the slack carry no flow and set the
/// `islanded` flag when they hold any net injection.
pub fn dc_power_flow(model: &GridModel) -> GridState {
    let net = Network::build(model);
    let n = model.buses.len();

    let islanded = (0..n).any(|i| !net.in_island[i] && net.injection[i].abs() > 1e-9);

    let rhs = DVector::from_iterator(
        net.reduced_len(),
        (0..n)
            .filter(|&i| net.reduced[i].is_some())
            .map(|i| net.injection[i]),
    );
    let theta_reduced = solve_spd(net.susceptance(model), rhs);
    let solved = theta_reduced.is_some();
    let theta_reduced = theta_reduced.unwrap_or_else(|| DVector::zeros(net.reduced_len()));

    let mut theta = vec![0.0; n];
    for i in 0..n {
        if let Some(r) = net.reduced[i] {
            theta[i] = theta_reduced[r];
        }
    }

    let mut state = GridState::default();
    for (id, &i) in &net.bus_index {
        if net.in_island[i] {
            state.angles.insert(*id, theta[i]);
        }
    }
    for br in &model.branches {
        let (f, t) = (net.bus_index[&br.from], net.bus_index[&br.to]);
        let flow = if br.breaker_closed && net.in_island[f] {
            (theta[f] - theta[t]) / br.reactance
        } else {
            0.0
        };
        state.flows.insert(br.id, flow);
        state
            .statuses
            .insert(DeviceId::Branch(br.id), br.breaker_closed);
    }

    let island_imbalance: f64 = (0..n)
        .filter(|&i| net.in_island[i])
        .map(|i| net.injection[i])
        .sum();
    let slack_gen = model.slack_generator();
    for g in &model.generators {
        let output = if !g.in_service {
            0.0
        } else if Some(g.id) == slack_gen {
            -island_imbalance
        } else {
            g.output_mw
        };
        state.outputs.insert(g.id, output);
        state
            .statuses
            .insert(DeviceId::Generator(g.id), g.in_service);
    }
    for l in &model.loads {
        state.statuses.insert(DeviceId::Load(l.id), l.in_service);
    }

    state.islanded = islanded;
    state.solved_ok = solved && !islanded && slack_gen.is_some();
    state
}

/// Line outage distribution factors for the outage of `outaged`: the share
/// of its pre-outage flow that moves onto each surviving closed branch.
pub fn lodf(model: &GridModel, outaged: BranchId) -> Result<BTreeMap<BranchId, f64>, GridError> {
    let k = model
        .branch(outaged)
        .ok_or(GridError::UnknownDevice(DeviceId::Branch(outaged)))?;
    if !k.breaker_closed {
        return Err(GridError::BranchOpen(outaged));
    }
    let net = Network::build(model);
    let (kf, kt) = (net.bus_index[&k.from], net.bus_index[&k.to]);
    if !net.in_island[kf] || is_bridge(model, &net, outaged) {
        return Err(GridError::IslandingOutage(outaged));
    }

    let b = net.susceptance(model);
    let m = b.nrows();
    let x = match b.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => b.try_inverse().ok_or(GridError::IslandingOutage(outaged))?,
    };
    debug_assert_eq!(x.nrows(), m);
    // Entry of the full impedance matrix with the slack row/column zeroed.
    let z = |i: usize, j: usize| match (net.reduced[i], net.reduced[j]) {
        (Some(a), Some(b)) => x[(a, b)],
        _ => 0.0,
    };
    // Flow on branch (f, t, reactance) per unit transfer from kf to kt.
    let ptdf = |f: usize, t: usize, reactance: f64| {
        (z(f, kf) - z(f, kt) - z(t, kf) + z(t, kt)) / reactance
    };
    let self_ptdf = ptdf(kf, kt, k.reactance);
    let denom = 1.0 - self_ptdf;
    if denom.abs() < 1e-9 {
        return Err(GridError::IslandingOutage(outaged));
    }

    let mut out = BTreeMap::new();
    for br in model.branches.iter().filter(|b| b.breaker_closed) {
        if br.id == outaged {
            continue;
        }
        let (f, t) = (net.bus_index[&br.from], net.bus_index[&br.to]);
        let factor = if net.in_island[f] {
            ptdf(f, t, br.reactance) / denom
        } else {
            0.0
        };
        out.insert(br.id, factor);
    }
    Ok(out)
}

/// Whether opening `branch` would split the slack island.
fn is_bridge(model: &GridModel, net: &Network, branch: BranchId) -> bool {
    let opened = model.with_open(&[branch]);
    let after = Network::build(&opened);
    net.in_island
        .iter()
        .zip(&after.in_island)
        .any(|(before, after)| *before && !*after)
}

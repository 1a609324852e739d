use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::flow::{dc_power_flow, lodf};
use super::model::{BranchId, GridModel};
use super::GridError;

/// Number of partial sets carried from one greedy level to the next.
pub const DEFAULT_BEAM: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contingency {
    /// Sorted ascending.
    pub branches: Vec<BranchId>,
    /// Highest post-outage loading over surviving branches, percent of
    /// limit. Infinite when the outage islands an injection.
    pub max_loading_pct: f64,
}

/// Scores a branch set by full re-solve with every branch in it opened.
pub fn score_outage(model: &GridModel, outage: &[BranchId]) -> f64 {
    let opened = model.with_open(outage);
    let state = dc_power_flow(&opened);
    if state.islanded {
        return f64::INFINITY;
    }
    opened
        .branches
        .iter()
        .filter(|b| b.breaker_closed)
        .map(|b| 100.0 * state.flow(b.id).abs() / b.limit_mw)
        .fold(0.0, f64::max)
}

fn rank_order(a: &Contingency, b: &Contingency) -> Ordering {
    b.max_loading_pct
        .partial_cmp(&a.max_loading_pct)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.branches.cmp(&b.branches))
}

/// Ranks outage sets of size `k` by the worst loading they induce.
///
/// Single outages are screened with LODFs against the base case. Larger
/// sets grow greedily: the best `beam` sets of the previous size are each
/// extended by every other closed branch and re-solved. Ties break on the
/// lexicographic order of the sorted branch ids.
pub fn rank_contingencies(model: &GridModel, k: usize) -> Result<Vec<Contingency>, GridError> {
    rank_contingencies_with_beam(model, k, DEFAULT_BEAM)
}

pub fn rank_contingencies_with_beam(
    model: &GridModel,
    k: usize,
    beam: usize,
) -> Result<Vec<Contingency>, GridError> {
    if !(1..=4).contains(&k) {
        return Err(GridError::InvalidSetSize(k));
    }
    let candidates: Vec<BranchId> = model
        .branches
        .iter()
        .filter(|b| b.breaker_closed)
        .map(|b| b.id)
        .collect();

    let base = dc_power_flow(model);
    let mut level: Vec<Contingency> = candidates
        .iter()
        .map(|&id| {
            let max_loading_pct = match lodf(model, id) {
                Ok(factors) => {
                    let pre = base.flow(id);
                    factors
                        .iter()
                        .map(|(m, f)| {
                            let limit = model.branch(*m).expect("factor for known branch").limit_mw;
                            100.0 * (base.flow(*m) + f * pre).abs() / limit
                        })
                        .fold(0.0, f64::max)
                }
                Err(GridError::IslandingOutage(_)) => score_outage(model, &[id]),
                Err(e) => return Err(e),
            };
            Ok(Contingency {
                branches: vec![id],
                max_loading_pct,
            })
        })
        .collect::<Result<_, _>>()?;
    level.sort_by(rank_order);

    for _ in 1..k {
        let mut seen = BTreeSet::new();
        let mut next = Vec::new();
        for parent in level.iter().take(beam.max(1)) {
            for &extra in &candidates {
                if parent.branches.contains(&extra) {
                    continue;
                }
                let mut set = parent.branches.clone();
                set.push(extra);
                set.sort();
                if !seen.insert(set.clone()) {
                    continue;
                }
                let max_loading_pct = score_outage(model, &set);
                next.push(Contingency {
                    branches: set,
                    max_loading_pct,
                });
            }
        }
        next.sort_by(rank_order);
        level = next;
    }
    Ok(level)
}

use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{interval_sweep_ms, payload_sweep, DosTarget};
use crate::netsim::LogLevel;

use super::config::{Scenario, ScenarioId, SweepSection};
use super::sim::run_scenario;
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Payload,
    Interval,
}

impl SweepKind {
    pub fn for_scenario(id: ScenarioId) -> Option<Self> {
        match id {
            ScenarioId::DosPayloadSweep => Some(SweepKind::Payload),
            ScenarioId::DosIntervalSweep => Some(SweepKind::Interval),
            _ => None,
        }
    }
}

/// Seed-averaged metrics for one (target, value) trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub target: DosTarget,
    /// Payload octets or nominal interval milliseconds.
    pub value: f64,
    pub seeds: usize,
    pub rtt_before_ms: Option<f64>,
    pub rtt_during_ms: Option<f64>,
    pub throughput_bps: f64,
    pub goodput_bps: f64,
    pub retransmissions: f64,
    pub requests_sent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub kind: SweepKind,
    pub base_seed: u64,
    pub rows: Vec<SweepRow>,
}

impl SweepSummary {
    pub fn rows_for(&self, target: DosTarget) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.target == target)
    }
}

/// Trial values for `kind`, in sweep order.
pub fn sweep_values(kind: SweepKind, section: &SweepSection) -> Vec<f64> {
    if !section.values.is_empty() {
        return section.values.clone();
    }
    match kind {
        SweepKind::Payload => payload_sweep().into_iter().map(|v| v as f64).collect(),
        SweepKind::Interval => interval_sweep_ms().into_iter().map(|v| v as f64).collect(),
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs every (target, value, seed) trial in parallel. Every value uses
/// the same seeds, so trends between values are not masked by seed noise.
pub fn run_sweep(scenario: &Scenario, kind: SweepKind) -> Result<SweepSummary, HarnessError> {
    let section = scenario.config.sweep.clone().unwrap_or_default();
    let values = sweep_values(kind, &section);
    let base = scenario.config.seed;
    let mut jobs = Vec::new();
    for &target in &section.targets {
        for &value in &values {
            for s in 0..section.seeds as u64 {
                jobs.push((target, value, base + s));
            }
        }
    }
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(target, value, seed)| {
            let mut sc = scenario.clone();
            let c = &mut sc.config;
            c.seed = seed;
            c.log_level = LogLevel::None;
            let dos = c.dos.as_mut().expect("validated sweep has a dos section");
            dos.target = target;
            match kind {
                SweepKind::Payload => dos.payload_size = value as usize,
                SweepKind::Interval => dos.interval_ms = value,
            }
            run_scenario(&sc).map(|out| out.report.dos.expect("dos run reports dos"))
        })
        .collect();
    let mut rows = Vec::new();
    let mut it = results.into_iter();
    for &target in &section.targets {
        for &value in &values {
            let runs = (0..section.seeds)
                .map(|_| it.next().expect("one result per job"))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(SweepRow {
                target,
                value,
                seeds: runs.len(),
                rtt_before_ms: mean(runs.iter().filter_map(|d| d.rtt_before_ms)),
                rtt_during_ms: mean(runs.iter().filter_map(|d| d.rtt_during_ms)),
                throughput_bps: mean(runs.iter().map(|d| d.throughput_during_bps)).unwrap_or(0.0),
                goodput_bps: mean(runs.iter().map(|d| d.goodput_during_bps)).unwrap_or(0.0),
                retransmissions: mean(runs.iter().map(|d| d.retransmissions_during as f64))
                    .unwrap_or(0.0),
                requests_sent: mean(runs.iter().map(|d| d.requests_sent as f64)).unwrap_or(0.0),
            });
        }
    }
    Ok(SweepSummary {
        kind,
        base_seed: base,
        rows,
    })
}

/// Writes `sweep.json` and `sweep.csv`.
pub fn write_sweep(summary: &SweepSummary, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let jp = dir.join("sweep.json");
    let f = File::create(&jp).map_err(|e| HarnessError::io(&jp, e))?;
    serde_json::to_writer_pretty(f, summary).map_err(|e| HarnessError::io(&jp, e))?;
    let cp = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&cp).map_err(|e| HarnessError::io(&cp, e))?;
    for r in &summary.rows {
        w.serialize(r).map_err(|e| HarnessError::io(&cp, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(&cp, e))?;
    Ok(())
}

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{
    expected_steps, simulate_attempts, AttackAnalyticsInput, Probabilities, UseCase,
};
use crate::scada::CommandMode;

use super::sim::RunReport;
use super::sweep::{SweepKind, SweepSummary};
use super::HarnessError;

/// Mean attempts per use case and command mode across co-simulation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRow {
    pub use_case: UseCase,
    pub command_mode: CommandMode,
    pub runs: usize,
    /// Runs that reached an overload.
    pub reached: usize,
    pub mean_fci: f64,
    pub mean_fdi: f64,
    pub mean_time_to_overload_s: Option<f64>,
}

/// Closed-form expectation next to a Monte-Carlo estimate of the same
/// attempt model, for the parameters of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scenario: String,
    pub seed: u64,
    pub use_case: UseCase,
    pub input: AttackAnalyticsInput,
    pub probabilities: Probabilities,
    pub expected_steps: f64,
    pub simulated_attempts: f64,
    /// Mutations the co-simulation tried before the overload.
    pub cosim_attempts: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RttRow {
    pub kind: SweepKind,
    pub target: String,
    pub value: f64,
    pub rtt_during_ms: Option<f64>,
    pub throughput_bps: f64,
    pub goodput_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub runs: usize,
    pub sweeps: usize,
    pub attempts: Vec<AttemptRow>,
    pub comparison: Vec<ComparisonRow>,
    pub rtt: Vec<RttRow>,
    pub alert_totals: BTreeMap<String, usize>,
}

fn collect(dir: &Path, name: &str, out: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        if p.is_dir() {
            collect(&p, name, out)?;
        } else if p.file_name().is_some_and(|f| f == name) {
            out.push(p);
        }
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(p: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::io(p, e))
}

/// Operation counts and probabilities implied by a run's attack policy.
pub(crate) fn analytics_input(
    run: &RunReport,
) -> Option<(UseCase, AttackAnalyticsInput, Probabilities)> {
    let a = run.config.attack.as_ref()?;
    let pol = &a.policy;
    let t = &pol.targets;
    let (m, n, o) = match pol.use_case {
        UseCase::Uc1 => (t.breakers.len() as u32, 0, 0),
        UseCase::Uc2 => (t.breakers.len() as u32, t.generators.len() as u32, 0),
        // One Read response carries every falsified point.
        UseCase::Uc3 => (1, 0, 1),
        UseCase::Uc4 => (t.breakers.len() as u32, 0, 1),
    };
    let stats = run.attack.as_ref()?.stats;
    let network_s = run.duration_s / run.time_compression;
    let input = AttackAnalyticsInput {
        m,
        n,
        o,
        lambda: stats.intercepted as f64 / network_s,
        mu: pol.service_rate_pps,
    };
    let probs = Probabilities {
        p: pol.p.unwrap_or(1.0),
        q: pol.q.unwrap_or(1.0),
        r: pol.r.unwrap_or(1.0),
    };
    Some((pol.use_case, input, probs))
}

pub(crate) fn summarize(
    runs: &[RunReport],
    sweeps: &[SweepSummary],
) -> Result<ReportSummary, HarnessError> {
    let mut groups: BTreeMap<(UseCase, u8), Vec<&RunReport>> = BTreeMap::new();
    let mut alert_totals = BTreeMap::new();
    for r in runs {
        for (k, n) in &r.alert_counts {
            *alert_totals.entry(k.clone()).or_insert(0) += n;
        }
        if let Some(a) = &r.attack {
            let mode = match r.config.master.command_mode {
                CommandMode::SelectOperate => 0,
                CommandMode::DirectOperate => 1,
            };
            groups.entry((a.use_case, mode)).or_default().push(r);
        }
    }
    let attempts = groups
        .into_iter()
        .map(|((uc, _), rs)| {
            let n = rs.len() as f64;
            let ttos: Vec<f64> = rs.iter().filter_map(|r| r.time_to_overload_s).collect();
            AttemptRow {
                use_case: uc,
                command_mode: rs[0].config.master.command_mode,
                runs: rs.len(),
                reached: ttos.len(),
                mean_fci: rs
                    .iter()
                    .map(|r| r.attack.as_ref().unwrap().fci_attempts_to_overload as f64)
                    .sum::<f64>()
                    / n,
                mean_fdi: rs
                    .iter()
                    .map(|r| r.attack.as_ref().unwrap().fdi_attempts_to_overload as f64)
                    .sum::<f64>()
                    / n,
                mean_time_to_overload_s: (!ttos.is_empty())
                    .then(|| ttos.iter().sum::<f64>() / ttos.len() as f64),
            }
        })
        .collect();

    let mut comparison = Vec::new();
    for r in runs {
        let Some((uc, input, probs)) = analytics_input(r) else {
            continue;
        };
        let expected = expected_steps(&input, probs, uc)?;
        let sim = simulate_attempts(uc, &input, probs, 10_000, r.seed)?;
        let a = r.attack.as_ref().expect("attack runs report attack stats");
        comparison.push(ComparisonRow {
            scenario: r.scenario.clone(),
            seed: r.seed,
            use_case: uc,
            input,
            probabilities: probs,
            expected_steps: expected,
            simulated_attempts: sim.mean_attempts,
            cosim_attempts: a.fci_attempts_to_overload + a.fdi_attempts_to_overload,
        });
    }

    let rtt = sweeps
        .iter()
        .flat_map(|s| {
            s.rows.iter().map(move |row| RttRow {
                kind: s.kind,
                target: row.target.label().to_string(),
                value: row.value,
                rtt_during_ms: row.rtt_during_ms,
                throughput_bps: row.throughput_bps,
                goodput_bps: row.goodput_bps,
            })
        })
        .collect();

    Ok(ReportSummary {
        runs: runs.len(),
        sweeps: sweeps.len(),
        attempts,
        comparison,
        rtt,
        alert_totals,
    })
}

/// Aggregates every `report.json` and `sweep.json` found under `dir`.
pub fn report(dir: &Path) -> Result<ReportSummary, HarnessError> {
    let mut run_paths = Vec::new();
    let mut sweep_paths = Vec::new();
    collect(dir, "report.json", &mut run_paths)?;
    collect(dir, "sweep.json", &mut sweep_paths)?;
    if run_paths.is_empty() && sweep_paths.is_empty() {
        return Err(HarnessError::EmptyInput(dir.display().to_string()));
    }
    let runs = run_paths
        .iter()
        .map(|p| read_json(p))
        .collect::<Result<Vec<RunReport>, _>>()?;
    let sweeps = sweep_paths
        .iter()
        .map(|p| read_json(p))
        .collect::<Result<Vec<SweepSummary>, _>>()?;
    summarize(&runs, &sweeps)
}

fn opt(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{v:.2}"))
}

impl ReportSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "runs: {}  sweeps: {}", self.runs, self.sweeps);
        if !self.attempts.is_empty() {
            let _ = writeln!(s, "\nattempts until overload");
            let _ = writeln!(
                s,
                "{:<5} {:<16} {:>4} {:>7} {:>8} {:>8} {:>10}",
                "uc", "mode", "runs", "reached", "fci", "fdi", "t_ovl_s"
            );
            for r in &self.attempts {
                let _ = writeln!(
                    s,
                    "{:<5} {:<16} {:>4} {:>7} {:>8.2} {:>8.2} {:>10}",
                    r.use_case.label(),
                    format!("{:?}", r.command_mode),
                    r.runs,
                    r.reached,
                    r.mean_fci,
                    r.mean_fdi,
                    opt(r.mean_time_to_overload_s)
                );
            }
        }
        if !self.comparison.is_empty() {
            let _ = writeln!(s, "\nexpected vs simulated attempts");
            let _ = writeln!(
                s,
                "{:<5} {:>6} {:>10} {:>10} {:>8}",
                "uc", "seed", "expected", "simulated", "cosim"
            );
            for c in &self.comparison {
                let _ = writeln!(
                    s,
                    "{:<5} {:>6} {:>10.3} {:>10.3} {:>8}",
                    c.use_case.label(),
                    c.seed,
                    c.expected_steps,
                    c.simulated_attempts,
                    c.cosim_attempts
                );
            }
        }
        if !self.rtt.is_empty() {
            let _ = writeln!(s, "\nflood sweeps");
            let _ = writeln!(
                s,
                "{:<9} {:<6} {:>8} {:>10} {:>12} {:>12}",
                "kind", "target", "value", "rtt_ms", "thru_Bps", "good_Bps"
            );
            for r in &self.rtt {
                let _ = writeln!(
                    s,
                    "{:<9} {:<6} {:>8} {:>10} {:>12.1} {:>12.1}",
                    format!("{:?}", r.kind).to_lowercase(),
                    r.target,
                    r.value,
                    opt(r.rtt_during_ms),
                    r.throughput_bps,
                    r.goodput_bps
                );
            }
        }
        if !self.alert_totals.is_empty() {
            let _ = writeln!(s, "\nalerts");
            for (k, n) in &self.alert_totals {
                let _ = writeln!(s, "{k:<20} {n}");
            }
        }
        s
    }
}

/// Writes `summary.txt`, `summary.json`, `attempts.csv`, `comparison.csv`
/// and `rtt.csv`.
pub fn write_report(summary: &ReportSummary, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let txt = dir.join("summary.txt");
    std::fs::write(&txt, summary.to_text()).map_err(|e| HarnessError::io(&txt, e))?;
    let js = dir.join("summary.json");
    let text = serde_json::to_string_pretty(summary).map_err(|e| HarnessError::io(&js, e))?;
    std::fs::write(&js, text).map_err(|e| HarnessError::io(&js, e))?;

    let p = dir.join("attempts.csv");
    let mut w = csv::Writer::from_path(&p).map_err(|e| HarnessError::io(&p, e))?;
    w.write_record([
        "use_case",
        "command_mode",
        "runs",
        "reached",
        "mean_fci",
        "mean_fdi",
        "mean_time_to_overload_s",
    ])
    .map_err(|e| HarnessError::io(&p, e))?;
    for r in &summary.attempts {
        w.write_record([
            r.use_case.label().to_string(),
            format!("{:?}", r.command_mode),
            r.runs.to_string(),
            r.reached.to_string(),
            r.mean_fci.to_string(),
            r.mean_fdi.to_string(),
            r.mean_time_to_overload_s
                .map_or(String::new(), |v| v.to_string()),
        ])
        .map_err(|e| HarnessError::io(&p, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(&p, e))?;

    let p = dir.join("comparison.csv");
    let mut w = csv::Writer::from_path(&p).map_err(|e| HarnessError::io(&p, e))?;
    w.write_record([
        "scenario",
        "seed",
        "use_case",
        "m",
        "n",
        "o",
        "p",
        "q",
        "r",
        "expected_steps",
        "simulated_attempts",
        "cosim_attempts",
    ])
    .map_err(|e| HarnessError::io(&p, e))?;
    for c in &summary.comparison {
        w.write_record([
            c.scenario.clone(),
            c.seed.to_string(),
            c.use_case.label().to_string(),
            c.input.m.to_string(),
            c.input.n.to_string(),
            c.input.o.to_string(),
            c.probabilities.p.to_string(),
            c.probabilities.q.to_string(),
            c.probabilities.r.to_string(),
            c.expected_steps.to_string(),
            c.simulated_attempts.to_string(),
            c.cosim_attempts.to_string(),
        ])
        .map_err(|e| HarnessError::io(&p, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(&p, e))?;

    let p = dir.join("rtt.csv");
    let mut w = csv::Writer::from_path(&p).map_err(|e| HarnessError::io(&p, e))?;
    for r in &summary.rtt {
        w.serialize(r).map_err(|e| HarnessError::io(&p, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(&p, e))?;
    Ok(())
}

//! Runs every single-run scenario into a directory and summarizes it, the
//! same as `scada-cosim run` followed by `scada-cosim report`.
//!
//! `cargo run --example harness_outputs -- out/`

use std::path::PathBuf;

use scada_cosim::harness::{
    builtin_scenario, report, run_scenario, write_outputs, write_report, ScenarioId,
};

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out".into()));
    for id in ScenarioId::ALL.into_iter().filter(|id| !id.is_sweep()) {
        let out = run_scenario(&builtin_scenario(id).unwrap()).unwrap();
        write_outputs(&out, &dir.join(id.label())).unwrap();
        println!(
            "{:<8} {} events, {} alerts",
            id.label(),
            out.events.len(),
            out.alerts.len()
        );
    }
    let summary = report(&dir).unwrap();
    write_report(&summary, &dir).unwrap();
    print!("{}", summary.to_text());
}

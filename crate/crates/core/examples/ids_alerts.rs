//! IDS output for a clean run, a MiTM run, and a MiTM run that leaves the
//! stale CRCs in rewritten frames.

use std::collections::BTreeMap;

use scada_cosim::harness::{builtin_config, run_scenario, Scenario, ScenarioConfig, ScenarioId};

fn alerts(config: ScenarioConfig) -> BTreeMap<String, usize> {
    let scenario = Scenario::resolve(config, std::path::Path::new(".")).unwrap();
    run_scenario(&scenario).unwrap().report.alert_counts
}

fn main() {
    println!(
        "baseline:        {:?}",
        alerts(builtin_config(ScenarioId::Baseline))
    );
    println!(
        "UC1:             {:?}",
        alerts(builtin_config(ScenarioId::Uc1))
    );
    let mut sloppy = builtin_config(ScenarioId::Uc1);
    sloppy.attack.as_mut().unwrap().policy.skip_crc = true;
    println!("UC1, stale CRCs: {:?}", alerts(sloppy));
}

//! Scenario loading, validation errors, output files and report aggregation.

use std::path::Path;

use scada_cosim::harness::{
    builtin_config, builtin_scenario, load_config, report, run_scenario, run_sweep, write_outputs,
    write_report, write_sweep, HarnessError, Scenario, ScenarioConfig, ScenarioId, SweepKind,
};
use scada_cosim::netsim::LogLevel;

const UC2_NO_Q: &str = r#"
id = "UC2"
seed = 1
[attack]
start_s = 10.0
[attack.policy]
use_case = "UC2"
p = 0.8
targets = { breakers = [10], generators = [2] }
"#;

fn field_of(config: ScenarioConfig, base: &Path) -> String {
    match Scenario::resolve(config, base) {
        Err(e) => e.field,
        Ok(_) => panic!("expected a validation error"),
    }
}

#[test]
fn every_builtin_resolves_and_round_trips() {
    for id in ScenarioId::ALL {
        let s = builtin_scenario(id).unwrap();
        let text = s.config.to_toml_string();
        assert_eq!(
            ScenarioConfig::from_toml_str(&text).unwrap(),
            s.config,
            "{id:?}"
        );
    }
}

#[test]
fn missing_grid_file_names_the_field() {
    let mut c = builtin_config(ScenarioId::Baseline);
    c.grid = Some("no_such_grid.toml".into());
    assert_eq!(field_of(c, Path::new(".")), "grid");
}

#[test]
fn missing_probability_names_the_field() {
    let c = ScenarioConfig::from_toml_str(UC2_NO_Q).unwrap();
    assert_eq!(field_of(c, Path::new(".")), "attack.policy.q");
}

#[test]
fn unknown_key_is_rejected_with_its_name() {
    let e = ScenarioConfig::from_toml_str("id = \"BASELINE\"\npoll_rate = 3\n").unwrap_err();
    assert!(e.to_string().contains("poll_rate"), "{e}");
}

#[test]
fn use_case_must_match_scenario_id() {
    let mut c = builtin_config(ScenarioId::Uc3);
    c.attack = builtin_config(ScenarioId::Uc4).attack;
    assert_eq!(field_of(c, Path::new(".")), "attack.policy.use_case");
}

#[test]
fn attack_scenario_without_attack_is_invalid() {
    let mut c = builtin_config(ScenarioId::Uc1);
    c.attack = None;
    assert_eq!(field_of(c, Path::new(".")), "attack");
}

#[test]
fn masters_out_of_range() {
    let mut c = builtin_config(ScenarioId::Baseline);
    c.masters = 0;
    assert_eq!(field_of(c, Path::new(".")), "masters");
}

#[test]
fn sweep_needs_dos_section() {
    let mut c = builtin_config(ScenarioId::DosPayloadSweep);
    c.dos = None;
    assert_eq!(field_of(c, Path::new(".")), "dos");
}

#[test]
fn validation_errors_exit_with_one() {
    let mut c = builtin_config(ScenarioId::Baseline);
    c.duration_s = -1.0;
    let e: HarnessError = Scenario::resolve(c, Path::new(".")).unwrap_err().into();
    assert_eq!(e.exit_code(), 1);
}

#[test]
fn file_references_resolve_next_to_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = builtin_config(ScenarioId::Baseline);
    std::fs::write(
        dir.path().join("grid.toml"),
        scada_cosim::harness::DESK_GRID,
    )
    .unwrap();
    c.grid = Some("grid.toml".into());
    let path = dir.path().join("scenario.toml");
    std::fs::write(&path, c.to_toml_string()).unwrap();
    let s = load_config(&path).unwrap();
    assert_eq!(s.grid.branches.len(), 17);
}

#[test]
fn report_on_empty_directory_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let e = report(dir.path()).unwrap_err();
    assert!(matches!(e, HarnessError::EmptyInput(_)));
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn run_outputs_feed_the_report() {
    let dir = tempfile::tempdir().unwrap();
    for id in [ScenarioId::Baseline, ScenarioId::Uc1, ScenarioId::Uc3] {
        let out = run_scenario(&builtin_scenario(id).unwrap()).unwrap();
        write_outputs(&out, &dir.path().join(id.label())).unwrap();
        for f in ["events.jsonl", "metrics.csv", "alerts.csv", "report.json"] {
            assert!(dir.path().join(id.label()).join(f).is_file(), "{f}");
        }
    }
    let mut c = builtin_config(ScenarioId::DosPayloadSweep);
    let sweep = c.sweep.as_mut().unwrap();
    sweep.seeds = 1;
    sweep.values = vec![800.0, 1800.0];
    c.duration_s = 120.0;
    let s = Scenario::resolve(c, Path::new(".")).unwrap();
    let summary = run_sweep(&s, SweepKind::Payload).unwrap();
    assert_eq!(summary.rows.len(), 4);
    write_sweep(&summary, &dir.path().join("sweep")).unwrap();

    let r = report(dir.path()).unwrap();
    assert_eq!((r.runs, r.sweeps), (3, 1));
    let ucs: Vec<_> = r.comparison.iter().map(|c| c.use_case).collect();
    assert_eq!(ucs.len(), 2);
    assert!(
        r.alert_totals
            .get("arp_binding_change")
            .copied()
            .unwrap_or(0)
            >= 2
    );
    let out = dir.path().join("summary");
    write_report(&r, &out).unwrap();
    for f in [
        "summary.txt",
        "summary.json",
        "attempts.csv",
        "comparison.csv",
        "rtt.csv",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert!(r.to_text().contains("runs: 3"));
}

#[test]
fn seed_changes_the_run_but_not_its_shape() {
    let mut a = builtin_config(ScenarioId::Uc2);
    a.log_level = LogLevel::None;
    let mut b = a.clone();
    b.seed = 99;
    let ra = run_scenario(&Scenario::resolve(a, Path::new(".")).unwrap()).unwrap();
    let rb = run_scenario(&Scenario::resolve(b, Path::new(".")).unwrap()).unwrap();
    assert_ne!(ra.report.polls, 0);
    assert_eq!(ra.report.polls, rb.report.polls);
    assert_ne!(
        ra.report.attack.as_ref().unwrap().stats,
        rb.report.attack.as_ref().unwrap().stats
    );
}

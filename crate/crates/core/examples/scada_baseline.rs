//! Attack-free run: the master polls, the operator closes branch 10 on a
//! schedule, automation watches generator readings, and the grid follows.

use scada_cosim::harness::{builtin_scenario, run_scenario, ScenarioId};

fn main() {
    let scenario = builtin_scenario(ScenarioId::Baseline).unwrap();
    let out = run_scenario(&scenario).unwrap();
    let r = &out.report;
    println!(
        "{} s simulated: {} polls, {} snapshots ({} mismatching ground truth)",
        r.duration_s, r.polls, r.snapshots, r.snapshot_mismatches
    );
    println!(
        "{} commands done, {} response timeouts, mean RTT {:.2} ms",
        r.commands_done,
        r.response_timeouts,
        r.mean_rtt_ms.unwrap_or(f64::NAN)
    );
    for c in r.executed.iter().take(5) {
        println!("  t={:>6.1} s  {}  {:?}", c.time, c.outstation, c.action);
    }
    println!("overloads: {:?}", r.overloaded_branches);
}

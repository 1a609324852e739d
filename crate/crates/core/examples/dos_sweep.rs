//! ICMP flood against each router across payload sizes.
//!
//! Pass `interval` to sweep the request interval instead.

use scada_cosim::attack::DosTarget;
use scada_cosim::harness::{builtin_scenario, run_sweep, ScenarioId, SweepKind};

fn main() {
    let (id, kind) = match std::env::args().nth(1).as_deref() {
        Some("interval") => (ScenarioId::DosIntervalSweep, SweepKind::Interval),
        _ => (ScenarioId::DosPayloadSweep, SweepKind::Payload),
    };
    let scenario = builtin_scenario(id).unwrap();
    let summary = run_sweep(&scenario, kind).unwrap();
    println!("{kind:?} sweep, {} seeds per point", summary.rows[0].seeds);
    for target in [DosTarget::SubstationRouter, DosTarget::UccRouter] {
        println!("{}", target.label());
        for r in summary.rows_for(target) {
            println!(
                "  {:>6}  RTT {:>7.3} ms (before {:.3})  throughput-goodput {:>6.1} B/s",
                r.value,
                r.rtt_during_ms.unwrap_or(f64::NAN),
                r.rtt_before_ms.unwrap_or(f64::NAN),
                r.throughput_bps - r.goodput_bps
            );
        }
    }
}

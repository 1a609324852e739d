//! ARP-poisoning man in the middle rewriting CLOSE commands to TRIP.
//!
//! `cargo run --example mitm_uc1 -- 0.5` sets the success probability p.

use scada_cosim::harness::{builtin_config, run_scenario, Scenario, ScenarioId};

fn main() {
    let p: f64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("p in [0, 1]"))
        .unwrap_or(0.8);
    let mut config = builtin_config(ScenarioId::Uc1);
    config.attack.as_mut().unwrap().policy.p = Some(p);
    let scenario = Scenario::resolve(config, std::path::Path::new(".")).unwrap();
    let out = run_scenario(&scenario).unwrap();

    for e in out.events.iter().filter(|e| e.kind == "mutation").take(8) {
        println!("{}", serde_json::to_string(&e.detail).unwrap());
    }
    let r = &out.report;
    let a = r.attack.as_ref().unwrap();
    println!(
        "p={p}: {} targeted, {} rewritten, miss rate {:.2}",
        a.stats.targeted, a.stats.successes, a.miss_rate
    );
    match r.time_to_overload_s {
        Some(t) => println!("first overload at {t:.1} s: {:?}", r.overloaded_branches),
        None => println!("no overload"),
    }
}

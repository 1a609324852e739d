//! Time to overload for UC2, UC3 and UC4 over a few seeds, next to the
//! attempt counts the closed-form model predicts.

use scada_cosim::attack::{
    expected_steps, simulate_attempts, AttackAnalyticsInput, Probabilities, UseCase,
};
use scada_cosim::harness::{builtin_config, run_scenario, Scenario, ScenarioId};
use scada_cosim::netsim::LogLevel;

fn main() {
    let ids = [ScenarioId::Uc2, ScenarioId::Uc3, ScenarioId::Uc4];
    println!("seed    UC2     UC3     UC4");
    for seed in 1..=5 {
        let t: Vec<String> = ids
            .iter()
            .map(|&id| {
                let mut c = builtin_config(id);
                c.seed = seed;
                c.log_level = LogLevel::None;
                let s = Scenario::resolve(c, std::path::Path::new(".")).unwrap();
                let r = run_scenario(&s).unwrap().report;
                r.time_to_overload_s
                    .map_or("-".into(), |t| format!("{t:.1}"))
            })
            .collect();
        println!("{seed:>4} {:>7} {:>7} {:>7}", t[0], t[1], t[2]);
    }

    let probs = Probabilities {
        p: 0.5,
        q: 0.5,
        r: 0.5,
    };
    let input = AttackAnalyticsInput {
        m: 1,
        n: 1,
        o: 1,
        lambda: 0.0,
        mu: 1.0,
    };
    println!("\np = q = r = 0.5, one operation each");
    for uc in [UseCase::Uc1, UseCase::Uc2, UseCase::Uc3, UseCase::Uc4] {
        let expected = expected_steps(&input, probs, uc).unwrap();
        let s = simulate_attempts(uc, &input, probs, 5000, 7).unwrap();
        println!(
            "{}: expected {expected:.2} attempts, simulated {:.2} (FCI {:.2}, FDI {:.2})",
            uc.label(),
            s.mean_attempts,
            s.mean_fci,
            s.mean_fdi
        );
    }
}

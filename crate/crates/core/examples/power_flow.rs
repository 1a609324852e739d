//! DC power flow on the desk grid, LODF screening of one outage, and the
//! worst branch pairs by post-outage loading.

use scada_cosim::grid::{dc_power_flow, lodf, rank_contingencies, BranchId, GridModel};
use scada_cosim::harness::DESK_GRID;

fn main() {
    let model = GridModel::from_toml_str(DESK_GRID).unwrap();
    let base = dc_power_flow(&model);
    println!("branch   flow MW   limit MW");
    for b in &model.branches {
        println!(
            "{:>6} {:>9.1} {:>10.1}",
            b.id.0,
            base.flow(b.id),
            b.limit_mw
        );
    }

    let out = BranchId(10);
    let factors = lodf(&model, out).unwrap();
    let after = dc_power_flow(&model.with_open(&[out]));
    println!("\noutage of branch {}: LODF prediction vs re-solve", out.0);
    for b in model.branches.iter().filter(|b| b.id != out) {
        let predicted = base.flow(b.id) + factors[&b.id] * base.flow(out);
        println!("{:>6} {:>9.2} {:>9.2}", b.id.0, predicted, after.flow(b.id));
    }

    println!("\nworst branch pairs:");
    for c in rank_contingencies(&model, 2).unwrap().iter().take(5) {
        let ids: Vec<u32> = c.branches.iter().map(|b| b.0).collect();
        println!("  {ids:?}  max loading {:.0}%", c.max_loading_pct);
    }
}

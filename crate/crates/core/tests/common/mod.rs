//! Independent oracles shared by the integration tests: a dense Gaussian
//! elimination DC power flow and a random connected-network generator.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use scada_cosim::grid::{Branch, BranchId, Bus, BusId, GenId, Generator, GridModel, Load, LoadId};

/// Solves A x = b by Gaussian elimination with partial pivoting.
pub fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Branch flows of a connected model, computed from scratch. Bus 0 of the
/// `buses` vector must be the slack.
pub fn oracle_flows(m: &GridModel) -> Vec<f64> {
    let n = m.buses.len();
    let idx = |id: BusId| m.buses.iter().position(|b| b.id == id).unwrap();
    assert!(m.buses[0].is_slack);
    let mut p = vec![0.0; n];
    for g in m
        .generators
        .iter()
        .filter(|g| g.in_service && !m.buses[idx(g.bus)].is_slack)
    {
        p[idx(g.bus)] += g.output_mw;
    }
    for l in m.loads.iter().filter(|l| l.in_service) {
        p[idx(l.bus)] -= l.demand_mw;
    }
    let mut bmat = vec![vec![0.0; n]; n];
    for br in m.branches.iter().filter(|b| b.breaker_closed) {
        let (f, t) = (idx(br.from), idx(br.to));
        let y = 1.0 / br.reactance;
        bmat[f][f] += y;
        bmat[t][t] += y;
        bmat[f][t] -= y;
        bmat[t][f] -= y;
    }
    let reduced: Vec<Vec<f64>> = bmat[1..].iter().map(|r| r[1..].to_vec()).collect();
    let mut theta = vec![0.0];
    theta.extend(gauss(reduced, p[1..].to_vec()));
    m.branches
        .iter()
        .map(|br| {
            if br.breaker_closed {
                (theta[idx(br.from)] - theta[idx(br.to)]) / br.reactance
            } else {
                0.0
            }
        })
        .collect()
}

pub fn random_network(rng: &mut ChaCha8Rng) -> GridModel {
    let n = rng.gen_range(3..=12u32);
    let buses = (1..=n)
        .map(|i| Bus {
            id: BusId(i),
            is_slack: i == 1,
            label: None,
        })
        .collect();
    let mut branches = Vec::new();
    let mut add = |from: u32, to: u32, rng: &mut ChaCha8Rng| {
        let id = branches.len() as u32 + 1;
        branches.push(Branch {
            id: BranchId(id),
            from: BusId(from),
            to: BusId(to),
            reactance: rng.gen_range(0.02..0.3),
            limit_mw: rng.gen_range(50.0..400.0),
            breaker_closed: true,
            label: None,
        });
    };
    // Spanning tree, then a ring closure and random chords so most
    // branches have an alternate path.
    for i in 2..=n {
        let parent = rng.gen_range(1..i);
        add(parent, i, rng);
    }
    add(n, 1, rng);
    for _ in 0..rng.gen_range(1..=n) {
        let a = rng.gen_range(1..=n);
        let b = rng.gen_range(1..=n);
        if a != b {
            add(a, b, rng);
        }
    }
    let mut generators = vec![Generator {
        id: GenId(1),
        bus: BusId(1),
        setpoint_mw: 0.0,
        output_mw: 0.0,
        max_mw: 10_000.0,
        ramp_mw_per_s: 1.0,
        in_service: true,
        label: None,
    }];
    let mut loads = Vec::new();
    for i in 2..=n {
        if rng.gen_bool(0.4) {
            let mw = rng.gen_range(10.0..200.0);
            generators.push(Generator {
                id: GenId(generators.len() as u32 + 1),
                bus: BusId(i),
                setpoint_mw: mw,
                output_mw: mw,
                max_mw: 300.0,
                ramp_mw_per_s: 5.0,
                in_service: true,
                label: None,
            });
        } else {
            loads.push(Load {
                id: LoadId(loads.len() as u32 + 1),
                bus: BusId(i),
                demand_mw: rng.gen_range(10.0..250.0),
                in_service: true,
                label: None,
            });
        }
    }
    GridModel {
        buses,
        branches,
        generators,
        loads,
    }
}

#![allow(dead_code)]

use opfkit::matpower::{make_basic, parse_matpower, BasicOptions};
use opfkit::network::branch_admittance;
use opfkit::{InstanceInput, Network};
use std::path::PathBuf;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn load_case(name: &str) -> Network {
    let text = std::fs::read_to_string(fixture_path(name)).unwrap();
    let (raw, _) = parse_matpower(&text).unwrap();
    make_basic(&raw, &BasicOptions { linearize_quadratic: true }).unwrap().0
}

pub struct Gen {
    pub bus: usize,
    pub cost: f64,
    pub p: (f64, f64),
    pub q: (f64, f64),
}

/// Two buses joined by one branch, loads on bus 2.
pub fn two_bus(r: f64, x: f64, smax: f64, vm: (f64, f64), pd: f64, qd: f64, gens: &[Gen]) -> Network {
    let mut net = Network::empty("two_bus", 100.0);
    for _ in 0..2 {
        net.gs.push(0.0);
        net.bs.push(0.0);
        net.vmin.push(vm.0);
        net.vmax.push(vm.1);
        net.vnom.push(230.0);
    }
    net.load_bus.push(1);
    net.pd.push(pd);
    net.qd.push(qd);
    for g in gens {
        net.gen_bus.push(g.bus);
        net.pmin.push(g.p.0);
        net.pmax.push(g.p.1);
        net.qmin.push(g.q.0);
        net.qmax.push(g.q.1);
        net.cost.push(g.cost);
    }
    let y = branch_admittance(r, x, 0.0, 1.0, 0.0).unwrap();
    let a = 60f64.to_radians();
    net.push_branch(0, 1, r, x, 0.0, 1.0, 0.0, y, smax, -a, a);
    net.finalize();
    net.validate().unwrap();
    net
}

/// Cheap generator at bus 1 feeding 1 p.u. over x = 0.1.
pub fn dc_toy() -> Network {
    two_bus(0.0, 0.1, 2.0, (0.9, 1.1), 1.0, 0.0, &[Gen { bus: 0, cost: 5.0, p: (0.0, 2.0), q: (-1.0, 1.0) }])
}

/// Same with a 0.5 p.u. line limit and an expensive generator at bus 2.
pub fn dc_congested() -> Network {
    two_bus(
        0.0,
        0.1,
        0.5,
        (0.9, 1.1),
        1.0,
        0.0,
        &[
            Gen { bus: 0, cost: 5.0, p: (0.0, 2.0), q: (-1.0, 1.0) },
            Gen { bus: 1, cost: 10.0, p: (0.0, 2.0), q: (-1.0, 1.0) },
        ],
    )
}

/// Lossless unit reactance, flat voltages, 0.5 p.u. demand. A synchronous
/// condenser at bus 2 supplies the reactive power the line absorbs.
pub fn ac_toy() -> Network {
    two_bus(
        0.0,
        1.0,
        2.0,
        (1.0, 1.0),
        0.5,
        0.0,
        &[
            Gen { bus: 0, cost: 1.0, p: (0.0, 2.0), q: (-1.0, 1.0) },
            Gen { bus: 1, cost: 0.0, p: (0.0, 0.0), q: (-1.0, 1.0) },
        ],
    )
}

pub fn nominal(net: &Network) -> InstanceInput {
    InstanceInput::nominal(net)
}

/// Unit-reactance graph with one 1 p.u. load on bus 0 and generators of
/// 10 p.u. at the given buses.
pub fn graph(n_bus: usize, edges: &[(usize, usize)], gen_buses: &[usize]) -> Network {
    let mut net = Network::empty("graph", 100.0);
    for _ in 0..n_bus {
        net.gs.push(0.0);
        net.bs.push(0.0);
        net.vmin.push(0.9);
        net.vmax.push(1.1);
        net.vnom.push(230.0);
    }
    net.load_bus.push(0);
    net.pd.push(1.0);
    net.qd.push(0.3);
    for &b in gen_buses {
        net.gen_bus.push(b);
        net.pmin.push(0.0);
        net.pmax.push(10.0);
        net.qmin.push(-10.0);
        net.qmax.push(10.0);
        net.cost.push(1.0);
    }
    let y = branch_admittance(0.0, 1.0, 0.0, 1.0, 0.0).unwrap();
    let a = 60f64.to_radians();
    for &(i, j) in edges {
        net.push_branch(i, j, 0.0, 1.0, 0.0, 1.0, 0.0, y, 5.0, -a, a);
    }
    net.finalize();
    net
}

mod common;

use common::*;
use opfkit::sampler::*;
use opfkit::{InstanceInput, Network};
use proptest::prelude::*;
use std::collections::VecDeque;

fn demand_cfg(b: (f64, f64), eps: f64, mode: SampleMode) -> SamplerConfig {
    SamplerConfig { b_l: b.0, b_u: b.1, eps, mode, base_seed: 11, capacity_screen: true }
}

/// Plain BFS over in-service branches.
fn connected(net: &Network, active: &[bool]) -> bool {
    let n = net.n_bus();
    let mut adj = vec![vec![]; n];
    for e in 0..net.n_branch() {
        if active[e] {
            adj[net.from[e]].push(net.to[e]);
            adj[net.to[e]].push(net.from[e]);
        }
    }
    let mut seen = vec![false; n];
    let mut q = VecDeque::from([0]);
    seen[0] = true;
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                q.push_back(v);
            }
        }
    }
    seen.iter().all(|&s| s)
}

fn brute_bridges(net: &Network) -> Vec<usize> {
    (0..net.n_branch())
        .filter(|&e| {
            let mut a = vec![true; net.n_branch()];
            a[e] = false;
            !connected(net, &a)
        })
        .collect()
}

#[test]
fn envelope_holds_over_many_samples() {
    let net = load_case("case14.m");
    let cfg = demand_cfg((0.7, 1.1), 0.2, SampleMode::Demand);
    let (lo, hi) = (0.7 * 0.8, 1.1 * 1.2);
    let mut gmin = f64::INFINITY;
    let mut gmax = f64::NEG_INFINITY;
    for i in 0..10_000 {
        let s = sample_demand(&net, &cfg, i);
        for l in 0..net.n_load() {
            for (x, r) in [(s.pd[l], net.pd[l]), (s.qd[l], net.qd[l])] {
                if r != 0.0 {
                    let m = x / r;
                    assert!((lo..=hi).contains(&m), "sample {i} load {l}: {m}");
                } else {
                    assert_eq!(x, 0.0);
                }
            }
        }
        let g = global_factor(&cfg, i);
        gmin = gmin.min(g);
        gmax = gmax.max(g);
    }
    assert!((gmin - 0.7).abs() < 0.005 && gmin >= 0.7, "{gmin}");
    assert!((gmax - 1.1).abs() < 0.005 && gmax <= 1.1, "{gmax}");
}

#[test]
fn total_demand_is_close_to_uniform() {
    let net = load_case("case14.m");
    let cfg = demand_cfg((0.8, 1.2), 0.05, SampleMode::Demand);
    let total: f64 = net.pd.iter().sum();
    let mut r: Vec<f64> = (0..10_000).map(|i| sample_demand(&net, &cfg, i).pd.iter().sum::<f64>() / total).collect();
    let mean_local = r.iter().sum::<f64>() / r.len() as f64;
    r.iter_mut().for_each(|x| *x /= mean_local);
    r.sort_by(f64::total_cmp);
    let n = r.len() as f64;
    let cdf = |x: f64| ((x - 0.8) / 0.4).clamp(0.0, 1.0);
    let ks = r
        .iter()
        .enumerate()
        .map(|(i, &x)| (cdf(x) - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf(x)).abs()))
        .fold(0.0, f64::max);
    assert!(ks < 0.05, "{ks}");
}

#[test]
fn active_and_reactive_multipliers_differ() {
    let net = load_case("case14.m");
    let cfg = demand_cfg((0.7, 1.1), 0.2, SampleMode::Demand);
    let differ = (0..100)
        .filter(|&i| {
            let s = sample_demand(&net, &cfg, i);
            (0..net.n_load()).any(|l| net.qd[l] != 0.0 && (s.pd[l] / net.pd[l] - s.qd[l] / net.qd[l]).abs() > 1e-12)
        })
        .count();
    assert!(differ >= 99, "{differ}");
}

#[test]
fn samples_do_not_depend_on_order() {
    let net = load_case("case57.m");
    let cfg = demand_cfg((0.7, 1.1), 0.2, SampleMode::NMinus1);
    let s = StatusSampler::new(&net, &cfg).unwrap();
    let fwd: Vec<InstanceInput> = (0..50).map(|i| s.sample(&net, &cfg, i)).collect();
    let mut rev: Vec<InstanceInput> = (0..50).rev().map(|i| s.sample(&net, &cfg, i)).collect();
    rev.reverse();
    assert_eq!(fwd, rev);
    let other = SamplerConfig { base_seed: 12, ..cfg.clone() };
    assert_ne!(sample_demand(&net, &cfg, 0).seed, sample_demand(&net, &other, 0).seed);
}

#[test]
fn n_minus_1_keeps_case118_connected() {
    let net = load_case("case118.m");
    let cfg = demand_cfg((0.7, 1.1), 0.2, SampleMode::NMinus1);
    let s = StatusSampler::new(&net, &cfg).unwrap();
    for i in 0..1000 {
        let x = s.sample(&net, &cfg, i);
        let off = x.branch_status.iter().chain(&x.gen_status).filter(|&&b| !b).count();
        assert_eq!(off, 1, "sample {i}");
        assert!(connected(&net, &x.branch_status), "sample {i}");
    }
}

#[test]
fn triangle_outages_are_uniform() {
    let net = graph(3, &[(0, 1), (1, 2), (2, 0)], &[1, 2]);
    let cfg = demand_cfg((0.7, 1.1), 0.2, SampleMode::NMinus1);
    let s = StatusSampler::new(&net, &cfg).unwrap();
    let mut counts = [0usize; 5];
    let n = 100_000;
    for i in 0..n {
        let x = s.sample(&net, &cfg, i);
        let k = x.branch_status.iter().chain(&x.gen_status).position(|&b| !b).unwrap();
        counts[k] += 1;
    }
    for c in counts {
        assert!((c as f64 / n as f64 - 0.2).abs() <= 0.02, "{counts:?}");
    }
}

#[test]
fn eligibility_rules() {
    let cfg = demand_cfg((0.7, 1.1), 0.2, SampleMode::NMinus1);
    let tree = graph(3, &[(0, 1), (1, 2)], &[1, 2]);
    let s = StatusSampler::new(&tree, &cfg).unwrap();
    for i in 0..200 {
        assert!(s.sample(&tree, &cfg, i).branch_status.iter().all(|&b| b));
    }
    let single = graph(3, &[(0, 1), (1, 2), (2, 0)], &[1]);
    let s = StatusSampler::new(&single, &cfg).unwrap();
    for i in 0..200 {
        assert!(s.sample(&single, &cfg, i).gen_status[0]);
    }
    let nothing = graph(2, &[(0, 1)], &[1]);
    assert!(StatusSampler::new(&nothing, &cfg).is_err());
}

#[test]
fn bridge_examples() {
    assert_eq!(find_bridges(&graph(3, &[(0, 1), (1, 2)], &[0])).unwrap(), vec![0, 1]);
    assert!(find_bridges(&graph(3, &[(0, 1), (1, 2), (2, 0)], &[0])).unwrap().is_empty());
    let two = graph(6, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3)], &[0]);
    assert_eq!(find_bridges(&two).unwrap(), vec![3]);
    assert!(find_bridges(&graph(2, &[(0, 1), (1, 0)], &[0])).unwrap().is_empty());
    assert!(find_bridges(&graph(3, &[(0, 1)], &[0])).is_err());
}

fn connected_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..9).prop_flat_map(|n| {
        // a random spanning tree plus random extra edges, parallels allowed
        let tree = proptest::collection::vec(any::<prop::sample::Index>(), n - 1);
        let extra = proptest::collection::vec((0..n, 0..n), 0..8);
        (Just(n), tree, extra).prop_map(|(n, tree, extra)| {
            let mut edges: Vec<(usize, usize)> = tree.iter().enumerate().map(|(k, ix)| (k + 1, ix.index(k + 1))).collect();
            edges.extend(extra.into_iter().filter(|(a, b)| a != b));
            (n, edges)
        })
    })
}

proptest! {
    #[test]
    fn bridges_match_brute_force((n, edges) in connected_graph()) {
        let net = graph(n, &edges, &[0]);
        prop_assert_eq!(find_bridges(&net).unwrap(), brute_bridges(&net));
    }
}

#[test]
fn timeseries_from_a_knot_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("knots.csv");
    std::fs::write(&path, "time,load_1\n0,0\n600,1\n1200,0\n").unwrap();
    let knots = read_knots(&path).unwrap();
    let refined = refine_timeseries(&knots, 300.0).unwrap();
    assert_eq!(refined.times, vec![0.0, 300.0, 600.0, 900.0, 1200.0]);
    let v: Vec<f64> = refined.values.iter().map(|r| r[0]).collect();
    assert_eq!(v[2], 1.0);
    assert!((v[1] - 0.6875).abs() < 1e-12 && (v[3] - 0.6875).abs() < 1e-12, "{v:?}");
    let net = graph(3, &[(0, 1), (1, 2), (2, 0)], &[1]);
    let inputs = timeseries_inputs(&net, &refined, 0).unwrap();
    assert_eq!(inputs.len(), 5);
    // reactive demand follows the nominal power factor
    assert!((inputs[1].qd[0] - 0.3 * 0.6875).abs() < 1e-12);
}

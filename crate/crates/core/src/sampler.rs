//! Instance sampling: demand perturbation, single outages, and spline
//! refinement of load time series.

use crate::error::{Error, Result};
use crate::network::Network;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// One sampled instance.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InstanceInput {
    pub pd: Vec<f64>,
    pub qd: Vec<f64>,
    pub branch_status: Vec<bool>,
    pub gen_status: Vec<bool>,
    pub seed: u64,
}

impl InstanceInput {
    /// Reference demand with every element in service.
    pub fn nominal(net: &Network) -> Self {
        InstanceInput {
            pd: net.pd.clone(),
            qd: net.qd.clone(),
            branch_status: vec![true; net.n_branch()],
            gen_status: vec![true; net.n_gen()],
            seed: 0,
        }
    }

    pub fn check(&self, net: &Network) -> Result<()> {
        if self.pd.len() != net.n_load() || self.qd.len() != net.n_load() {
            return Err(Error::Input(format!("demand vectors must have {} entries", net.n_load())));
        }
        if self.branch_status.len() != net.n_branch() || self.gen_status.len() != net.n_gen() {
            return Err(Error::Input("status vectors do not match the network".into()));
        }
        if self.pd.iter().chain(&self.qd).any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite demand".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Demand,
    NMinus1,
    Timeseries,
}

impl SampleMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SampleMode::Demand => "demand",
            SampleMode::NMinus1 => "n-1",
            SampleMode::Timeseries => "timeseries",
        }
    }
}

impl std::str::FromStr for SampleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "demand" | "demand-only" => Ok(SampleMode::Demand),
            "n-1" | "n1" | "nminus1" => Ok(SampleMode::NMinus1),
            "timeseries" => Ok(SampleMode::Timeseries),
            _ => Err(Error::Config(format!("unknown sampling mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    /// Global load range, as fractions of the reference demand.
    pub b_l: f64,
    pub b_u: f64,
    /// Per-load noise level.
    pub eps: f64,
    pub mode: SampleMode,
    pub base_seed: u64,
    /// Only disable generators whose loss leaves enough capacity.
    pub capacity_screen: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { b_l: 0.7, b_u: 1.1, eps: 0.2, mode: SampleMode::Demand, base_seed: 0, capacity_screen: true }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.b_l && self.b_l <= self.b_u && self.b_u.is_finite()) {
            return Err(Error::Config(format!("need 0 < b_l <= b_u, got ({}, {})", self.b_l, self.b_u)));
        }
        if !(0.0 <= self.eps && self.eps < 1.0) {
            return Err(Error::Config(format!("need 0 <= eps < 1, got {}", self.eps)));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-sample seed derived from the run seed and the sample index.
pub fn sample_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(index))
}

pub fn sample_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Draws the demand multipliers for one sample. Returns the global factor
/// and the per-load active/reactive multipliers.
fn draw_demand(rng: &mut ChaCha8Rng, cfg: &SamplerConfig, n_load: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let b = uniform(rng, cfg.b_l, cfg.b_u);
    let mut ep = Vec::with_capacity(n_load);
    let mut eq = Vec::with_capacity(n_load);
    for _ in 0..n_load {
        ep.push(uniform(rng, 1.0 - cfg.eps, 1.0 + cfg.eps));
        eq.push(uniform(rng, 1.0 - cfg.eps, 1.0 + cfg.eps));
    }
    (b, ep, eq)
}

/// Global factor drawn for a sample; exposed for distribution checks.
pub fn global_factor(cfg: &SamplerConfig, index: u64) -> f64 {
    let mut rng = sample_rng(sample_seed(cfg.base_seed, index));
    uniform(&mut rng, cfg.b_l, cfg.b_u)
}

/// Perturbed demand with every element in service.
pub fn sample_demand(net: &Network, cfg: &SamplerConfig, index: u64) -> InstanceInput {
    let seed = sample_seed(cfg.base_seed, index);
    let mut rng = sample_rng(seed);
    demand_from(net, cfg, &mut rng, seed)
}

fn demand_from(net: &Network, cfg: &SamplerConfig, rng: &mut ChaCha8Rng, seed: u64) -> InstanceInput {
    let (b, ep, eq) = draw_demand(rng, cfg, net.n_load());
    let pd = net.pd.iter().zip(&ep).map(|(p, e)| b * e * p).collect();
    let qd = net.qd.iter().zip(&eq).map(|(q, e)| b * e * q).collect();
    InstanceInput { pd, qd, branch_status: vec![true; net.n_branch()], gen_status: vec![true; net.n_gen()], seed }
}

/// Branches whose removal disconnects the network. Parallel branches are
/// never bridges.
pub fn find_bridges(net: &Network) -> Result<Vec<usize>> {
    find_bridges_masked(net, &vec![true; net.n_branch()])
}

/// Bridges of the subgraph of branches with `active[e]`.
pub fn find_bridges_masked(net: &Network, active: &[bool]) -> Result<Vec<usize>> {
    let n = net.n_bus();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![vec![]; n];
    for e in 0..net.n_branch() {
        if active[e] {
            adj[net.from[e]].push((net.to[e], e));
            adj[net.to[e]].push((net.from[e], e));
        }
    }
    let mut order = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut bridges = Vec::new();
    let mut t = 0;
    // iterative DFS; stack holds (vertex, entering edge, next neighbor slot)
    let mut stack: Vec<(usize, usize, usize)> = vec![(0, usize::MAX, 0)];
    order[0] = 0;
    low[0] = 0;
    t += 1;
    while let Some(top) = stack.last_mut() {
        let (u, via, k) = *top;
        if k < adj[u].len() {
            top.2 += 1;
            let (v, e) = adj[u][k];
            if e == via {
                continue;
            }
            if order[v] == usize::MAX {
                order[v] = t;
                low[v] = t;
                t += 1;
                stack.push((v, e, 0));
            } else {
                low[u] = low[u].min(order[v]);
            }
        } else {
            stack.pop();
            if let Some(&(p, _, _)) = stack.last() {
                low[p] = low[p].min(low[u]);
                if low[u] > order[p] {
                    bridges.push(via);
                }
            }
        }
    }
    if t < n {
        return Err(Error::Network(format!("graph is disconnected: {} of {n} buses reachable", t)));
    }
    bridges.sort_unstable();
    Ok(bridges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outage {
    Branch(usize),
    Gen(usize),
}

/// Draws single-element outages from a fixed eligible set.
#[derive(Debug, Clone)]
pub struct StatusSampler {
    pub eligible: Vec<Outage>,
}

impl StatusSampler {
    pub fn new(net: &Network, cfg: &SamplerConfig) -> Result<Self> {
        let bridges = find_bridges(net)?;
        let mut is_bridge = vec![false; net.n_branch()];
        for e in bridges {
            is_bridge[e] = true;
        }
        let mut eligible: Vec<Outage> = (0..net.n_branch()).filter(|&e| !is_bridge[e]).map(Outage::Branch).collect();
        if net.n_gen() >= 2 {
            let cap: f64 = net.pmax.iter().sum();
            let peak = cfg.b_u * (1.0 + cfg.eps) * net.total_pd();
            for g in 0..net.n_gen() {
                if !cfg.capacity_screen || cap - net.pmax[g] >= peak {
                    eligible.push(Outage::Gen(g));
                }
            }
        }
        if eligible.is_empty() {
            return Err(Error::Network("no branch or generator can be taken out of service".into()));
        }
        Ok(StatusSampler { eligible })
    }

    pub fn sample(&self, net: &Network, cfg: &SamplerConfig, index: u64) -> InstanceInput {
        let seed = sample_seed(cfg.base_seed, index);
        let mut rng = sample_rng(seed);
        let mut inst = demand_from(net, cfg, &mut rng, seed);
        match self.eligible[rng.gen_range(0..self.eligible.len())] {
            Outage::Branch(e) => inst.branch_status[e] = false,
            Outage::Gen(g) => inst.gen_status[g] = false,
        }
        inst
    }
}

/// Perturbed demand plus one outage.
pub fn sample_status(net: &Network, cfg: &SamplerConfig, index: u64) -> Result<InstanceInput> {
    Ok(StatusSampler::new(net, cfg)?.sample(net, cfg, index))
}

/// Natural cubic spline through `(t, y)`.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    t: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(t: &[f64], y: &[f64]) -> Result<Self> {
        let n = t.len();
        if n < 3 || y.len() != n {
            return Err(Error::Input(format!("spline needs at least 3 knots, got {n}")));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Input("knot times must be strictly increasing".into()));
        }
        // tridiagonal system for interior second derivatives (Thomas algorithm)
        let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        let k = n - 2;
        let mut diag = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        let mut sup = vec![0.0; k];
        for i in 0..k {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            sup[i] = h[i + 1];
            rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
        }
        for i in 1..k {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut m = vec![0.0; n];
        for i in (0..k).rev() {
            let next = if i + 1 < k { m[i + 2] } else { 0.0 };
            m[i + 1] = (rhs[i] - sup[i] * next) / diag[i];
        }
        Ok(NaturalSpline { t: t.to_vec(), y: y.to_vec(), m })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.t.len();
        let i = match self.t.partition_point(|&v| v <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        if x == t0 {
            return self.y[i];
        }
        if x == t1 {
            return self.y[i + 1];
        }
        let h = t1 - t0;
        let (a, b) = (t1 - x, x - t0);
        self.m[i] * a * a * a / (6.0 * h)
            + self.m[i + 1] * b * b * b / (6.0 * h)
            + (self.y[i] - self.m[i] * h * h / 6.0) * a / h
            + (self.y[i + 1] - self.m[i + 1] * h * h / 6.0) * b / h
    }
}

/// Demand knots for a time series: times in seconds, one vector per time.
#[derive(Debug, Clone, PartialEq)]
pub struct Knots {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Number of interpolated entries clamped up to zero.
    pub clamped: usize,
}

/// Interpolates every load component on a regular grid of `step` seconds.
pub fn refine_timeseries(knots: &Knots, step: f64) -> Result<Refined> {
    if !(step > 0.0) {
        return Err(Error::Input("time step must be positive".into()));
    }
    let nt = knots.times.len();
    if nt < 3 {
        return Err(Error::Input(format!("need at least 3 knots, got {nt}")));
    }
    let width = knots.values.first().map_or(0, |v| v.len());
    if knots.values.len() != nt || knots.values.iter().any(|v| v.len() != width) {
        return Err(Error::Input("ragged knot table".into()));
    }
    let splines = (0..width)
        .map(|j| {
            let y: Vec<f64> = knots.values.iter().map(|v| v[j]).collect();
            NaturalSpline::new(&knots.times, &y)
        })
        .collect::<Result<Vec<_>>>()?;
    let (t0, t1) = (knots.times[0], knots.times[nt - 1]);
    let count = ((t1 - t0) / step * (1.0 + 1e-12)).floor() as usize + 1;
    let mut out = Refined { times: Vec::with_capacity(count), values: Vec::with_capacity(count), clamped: 0 };
    for k in 0..count {
        let t = (t0 + k as f64 * step).min(t1);
        let mut row: Vec<f64> = splines.iter().map(|s| s.eval(t)).collect();
        for v in row.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
                out.clamped += 1;
            }
        }
        out.times.push(t);
        out.values.push(row);
    }
    Ok(out)
}

/// Turns refined active demand into instances. Reactive demand keeps each
/// load's reference power factor.
pub fn timeseries_inputs(net: &Network, refined: &Refined, base_seed: u64) -> Result<Vec<InstanceInput>> {
    refined
        .values
        .iter()
        .enumerate()
        .map(|(k, pd)| {
            if pd.len() != net.n_load() {
                return Err(Error::Input(format!("time series has {} loads, network has {}", pd.len(), net.n_load())));
            }
            let qd = (0..pd.len())
                .map(|l| if net.pd[l] != 0.0 { net.qd[l] * pd[l] / net.pd[l] } else { net.qd[l] })
                .collect();
            Ok(InstanceInput {
                pd: pd.clone(),
                qd,
                branch_status: vec![true; net.n_branch()],
                gen_status: vec![true; net.n_gen()],
                seed: sample_seed(base_seed, k as u64),
            })
        })
        .collect()
}

/// Reads a knot table with header `time,load_1,...,load_L`.
pub fn read_knots(path: &Path) -> Result<Knots> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| Error::file(path, e))?;
    let header = rdr.headers().map_err(|e| Error::file(path, e))?.clone();
    if header.get(0) != Some("time") {
        return Err(Error::file(path, "first column must be `time`"));
    }
    for (j, h) in header.iter().enumerate().skip(1) {
        if h != format!("load_{j}") {
            return Err(Error::file(path, format!("column {} should be `load_{j}`, found `{h}`", j + 1)));
        }
    }
    let mut knots = Knots { times: vec![], values: vec![] };
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::file(path, e))?;
        let vals = rec
            .iter()
            .map(|c| c.parse::<f64>().map_err(|_| Error::file(path, format!("row {}: bad number `{c}`", r + 2))))
            .collect::<Result<Vec<_>>>()?;
        knots.times.push(vals[0]);
        knots.values.push(vals[1..].to_vec());
    }
    Ok(knots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::branch_admittance;

    /// Buses in a graph given by edge list; one load and generator per bus.
    pub(crate) fn graph(n: usize, edges: &[(usize, usize)], gens: usize) -> Network {
        let mut net = Network::empty("g", 100.0);
        for _ in 0..n {
            net.gs.push(0.0);
            net.bs.push(0.0);
            net.vmin.push(0.9);
            net.vmax.push(1.1);
            net.vnom.push(1.0);
        }
        for i in 0..n {
            net.load_bus.push(i);
            net.pd.push(0.1);
            net.qd.push(0.05);
        }
        for g in 0..gens {
            net.gen_bus.push(g % n);
            net.pmin.push(0.0);
            net.pmax.push(10.0);
            net.qmin.push(-1.0);
            net.qmax.push(1.0);
            net.cost.push(1.0);
        }
        for &(f, t) in edges {
            let y = branch_admittance(0.0, 0.1, 0.0, 1.0, 0.0).unwrap();
            net.push_branch(f, t, 0.0, 0.1, 0.0, 1.0, 0.0, y, 1.0, -0.5, 0.5);
        }
        net.finalize();
        net
    }

    #[test]
    fn zero_noise_is_exact() {
        let mut net = graph(2, &[(0, 1)], 1);
        net.pd = vec![1.0, 2.0];
        let cfg = SamplerConfig { b_l: 0.8, b_u: 0.8, eps: 0.0, ..Default::default() };
        let s = sample_demand(&net, &cfg, 7);
        assert_eq!(s.pd, vec![0.8, 1.6]);
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        let net = graph(3, &[(0, 1), (1, 2)], 1);
        let cfg = SamplerConfig::default();
        assert_eq!(sample_demand(&net, &cfg, 3), sample_demand(&net, &cfg, 3));
        assert_ne!(sample_demand(&net, &cfg, 3).pd, sample_demand(&net, &cfg, 4).pd);
        assert_ne!(sample_seed(0, 1), sample_seed(1, 0));
    }

    #[test]
    fn bridges_of_small_graphs() {
        assert_eq!(find_bridges(&graph(3, &[(0, 1), (1, 2)], 1)).unwrap(), vec![0, 1]);
        assert!(find_bridges(&graph(3, &[(0, 1), (1, 2), (2, 0)], 1)).unwrap().is_empty());
        // parallel pair is never a bridge
        assert_eq!(find_bridges(&graph(3, &[(0, 1), (0, 1), (1, 2)], 1)).unwrap(), vec![2]);
        assert!(find_bridges(&graph(3, &[(0, 1)], 1)).is_err());
    }

    #[test]
    fn status_sampling_eligibility() {
        let cfg = SamplerConfig { capacity_screen: false, ..Default::default() };
        let tree = graph(3, &[(0, 1), (1, 2)], 2);
        let s = StatusSampler::new(&tree, &cfg).unwrap();
        assert!(s.eligible.iter().all(|o| matches!(o, Outage::Gen(_))));
        let single = graph(3, &[(0, 1), (1, 2), (2, 0)], 1);
        let s = StatusSampler::new(&single, &cfg).unwrap();
        assert!(s.eligible.iter().all(|o| matches!(o, Outage::Branch(_))));
        assert!(StatusSampler::new(&graph(2, &[(0, 1)], 1), &cfg).is_err());
    }

    #[test]
    fn capacity_screen_drops_critical_generators() {
        let mut net = graph(3, &[(0, 1), (1, 2), (2, 0)], 2);
        net.pmax = vec![10.0, 0.1];
        let s = StatusSampler::new(&net, &SamplerConfig::default()).unwrap();
        assert!(s.eligible.contains(&Outage::Gen(1)));
        assert!(!s.eligible.contains(&Outage::Gen(0)));
    }

    #[test]
    fn spline_hat_function() {
        let s = NaturalSpline::new(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!((s.eval(0.5) - 0.6875).abs() < 1e-12);
        assert_eq!(s.eval(1.0), 1.0);
        assert!((s.eval(1.5) - 0.6875).abs() < 1e-12);
    }

    #[test]
    fn spline_reproduces_affine_data() {
        let t = [0.0, 0.7, 1.5, 4.0, 4.2];
        let y: Vec<f64> = t.iter().map(|x| 3.0 - 2.0 * x).collect();
        let s = NaturalSpline::new(&t, &y).unwrap();
        for k in 0..=42 {
            let x = k as f64 * 0.1;
            assert!((s.eval(x) - (3.0 - 2.0 * x)).abs() < 1e-12);
        }
    }

    #[test]
    fn spline_rejects_bad_knots() {
        assert!(NaturalSpline::new(&[0.0, 1.0], &[0.0, 1.0]).is_err());
        assert!(NaturalSpline::new(&[0.0, 2.0, 1.0], &[0.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn refine_grid_and_clamping() {
        let knots = Knots { times: vec![0.0, 600.0, 1200.0], values: vec![vec![0.0], vec![1.0], vec![-1.0]] };
        let r = refine_timeseries(&knots, 300.0).unwrap();
        assert_eq!(r.times, vec![0.0, 300.0, 600.0, 900.0, 1200.0]);
        assert_eq!(r.values[2], vec![1.0]);
        assert_eq!(r.values[4], vec![0.0]);
        assert!(r.clamped >= 1);
    }
}

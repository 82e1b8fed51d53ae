//! Problem builders for the three formulations, solution extraction and
//! constraint residuals.
//!
//! Every row is stored as `g(x) (rel) rhs` with a multiplier `y` such that
//! `∇f = Σ y ∇g` at a stationary point. Lower-side multipliers are
//! nonnegative, upper-side multipliers nonpositive. Flow definitions are
//! written `expr(w or v) − flow = 0` and nodal balances as
//! `generation − outflow ± shunt = demand`.

pub mod ac;
pub mod dc;
pub mod soc;

pub use ac::{build_acopf, AcProblem};
pub use dc::build_dcopf;
pub use soc::{build_socopf, derive_w_bounds};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::sampler::InstanceInput;
use crate::schema::{dual_keys, primal_keys, Formulation, Key};
use opfkit_solver::{
    solve_conic, solve_lp, solve_nlp, Cone, ConicProblem, CscMatrix, SolveResult, SolveStatus, SolverOptions,
};
use std::collections::BTreeMap;
use std::time::Instant;

/// Named arrays, flattened row-major for cone duals.
pub type Point = BTreeMap<String, Vec<f64>>;

/// Zero-filled arrays for a key list.
pub fn zero_point(keys: &[Key], net: &Network) -> Point {
    keys.iter().map(|k| (k.name.to_string(), vec![0.0; k.size(net)])).collect()
}

/// In-service generators and branches of one instance.
#[derive(Debug, Clone)]
pub struct Active {
    pub gens: Vec<usize>,
    pub branches: Vec<usize>,
    pub gen_on: Vec<bool>,
    pub branch_on: Vec<bool>,
}

impl Active {
    pub fn new(net: &Network, input: &InstanceInput) -> Result<Self> {
        input.check(net)?;
        Ok(Active {
            gens: (0..net.n_gen()).filter(|&g| input.gen_status[g]).collect(),
            branches: (0..net.n_branch()).filter(|&e| input.branch_status[e]).collect(),
            gen_on: input.gen_status.clone(),
            branch_on: input.branch_status.clone(),
        })
    }

    pub fn bus_demand(net: &Network, input: &InstanceInput) -> (Vec<f64>, Vec<f64>) {
        let mut p = vec![0.0; net.n_bus()];
        let mut q = vec![0.0; net.n_bus()];
        for (l, &b) in net.load_bus.iter().enumerate() {
            p[b] += input.pd[l];
            q[b] += input.qd[l];
        }
        (p, q)
    }
}

/// A contiguous block of variables mapped to one primal key.
#[derive(Debug, Clone)]
pub(crate) struct VarBlock {
    pub key: &'static str,
    pub elems: Vec<usize>,
    pub start: usize,
}

impl VarBlock {
    pub fn col(&self, k: usize) -> usize {
        self.start + k
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct VarMap {
    pub blocks: Vec<VarBlock>,
    pub n: usize,
}

impl VarMap {
    pub fn add(&mut self, key: &'static str, elems: Vec<usize>) -> usize {
        let start = self.n;
        self.n += elems.len();
        self.blocks.push(VarBlock { key, elems, start });
        self.blocks.len() - 1
    }

    /// Column of element `elem` of block `b`, by position.
    pub fn col(&self, b: usize, pos: usize) -> usize {
        self.blocks[b].col(pos)
    }

    pub fn to_point(&self, x: &[f64], keys: &[Key], net: &Network) -> Point {
        let mut p = zero_point(keys, net);
        for blk in &self.blocks {
            let arr = p.get_mut(blk.key).expect("block key in schema");
            for (k, &e) in blk.elems.iter().enumerate() {
                arr[e] = x[blk.start + k];
            }
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Section {
    Eq,
    Ineq,
    Soc,
    Rsoc,
}

/// Rows of one dual key. `rows[k]` is the first row of element `elems[k]`.
#[derive(Debug, Clone)]
pub(crate) struct RowGroup {
    pub key: &'static str,
    pub section: Section,
    pub width: usize,
    pub elems: Vec<usize>,
    pub rows: Vec<usize>,
    /// +1 for `≥`/equality rows, −1 for `≤` rows stored negated.
    pub sign: f64,
}

#[derive(Debug, Clone, Default)]
struct RowBuf {
    trip: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
    cones: Vec<Cone>,
}

impl RowBuf {
    fn push(&mut self, entries: &[(usize, f64)], rhs: f64) -> usize {
        let r = self.b.len();
        for &(c, v) in entries {
            if v != 0.0 {
                self.trip.push((r, c, v));
            }
        }
        self.b.push(rhs);
        r
    }
}

/// Assembles `A x − b ∈ K` section by section.
#[derive(Debug, Default)]
pub(crate) struct ConicBuilder {
    sec: [RowBuf; 4],
    groups: Vec<RowGroup>,
}

fn sec_idx(s: Section) -> usize {
    match s {
        Section::Eq => 0,
        Section::Ineq => 1,
        Section::Soc => 2,
        Section::Rsoc => 3,
    }
}

impl ConicBuilder {
    pub fn group(&mut self, key: &'static str, section: Section, width: usize, sign: f64) -> usize {
        self.groups.push(RowGroup { key, section, width, elems: vec![], rows: vec![], sign });
        self.groups.len() - 1
    }

    /// Equality row `Σ a x = rhs`.
    pub fn eq(&mut self, g: usize, elem: usize, entries: &[(usize, f64)], rhs: f64) {
        let r = self.sec[0].push(entries, rhs);
        self.record(g, elem, r);
    }

    /// `Σ a x ≥ lo`.
    pub fn ge(&mut self, g: usize, elem: usize, entries: &[(usize, f64)], lo: f64) {
        let r = self.sec[1].push(entries, lo);
        self.record(g, elem, r);
    }

    /// `Σ a x ≤ hi`, stored negated.
    pub fn le(&mut self, g: usize, elem: usize, entries: &[(usize, f64)], hi: f64) {
        let neg: Vec<(usize, f64)> = entries.iter().map(|&(c, v)| (c, -v)).collect();
        let r = self.sec[1].push(&neg, -hi);
        self.record(g, elem, r);
    }

    /// A cone block whose row `t` is `Σ rows[t] x + consts[t]`.
    pub fn cone(&mut self, g: usize, elem: usize, rows: &[Vec<(usize, f64)>], consts: &[f64]) {
        let section = self.groups[g].section;
        let buf = &mut self.sec[sec_idx(section)];
        let first = buf.b.len();
        for (entries, k) in rows.iter().zip(consts) {
            buf.push(entries, -k);
        }
        buf.cones.push(match section {
            Section::Soc => Cone::Soc(rows.len()),
            Section::Rsoc => Cone::RotatedSoc(rows.len()),
            _ => unreachable!("cone rows belong to a cone section"),
        });
        self.record(g, elem, first);
    }

    fn record(&mut self, g: usize, elem: usize, row: usize) {
        self.groups[g].elems.push(elem);
        self.groups[g].rows.push(row);
    }

    pub fn finish(self, c: Vec<f64>) -> ConicModelParts {
        let n = c.len();
        let mut off = [0usize; 4];
        let mut total = 0;
        for s in 0..4 {
            off[s] = total;
            total += self.sec[s].b.len();
        }
        let mut trip = Vec::new();
        let mut b = Vec::with_capacity(total);
        let mut cones = Vec::new();
        for (s, buf) in self.sec.iter().enumerate() {
            trip.extend(buf.trip.iter().map(|&(r, c, v)| (r + off[s], c, v)));
            b.extend_from_slice(&buf.b);
            match s {
                0 if !buf.b.is_empty() => cones.push(Cone::Zero(buf.b.len())),
                1 if !buf.b.is_empty() => cones.push(Cone::Nonneg(buf.b.len())),
                _ => cones.extend_from_slice(&buf.cones),
            }
        }
        let groups = self
            .groups
            .into_iter()
            .map(|mut g| {
                let o = off[sec_idx(g.section)];
                g.rows.iter_mut().for_each(|r| *r += o);
                g
            })
            .collect();
        let rows: Vec<usize> = trip.iter().map(|t| t.0).collect();
        let cols: Vec<usize> = trip.iter().map(|t| t.1).collect();
        let vals: Vec<f64> = trip.iter().map(|t| t.2).collect();
        let a = CscMatrix::from_triplets(total, n, &rows, &cols, &vals);
        ConicModelParts { problem: ConicProblem { c, a, b, cones }, groups }
    }
}

pub(crate) struct ConicModelParts {
    pub problem: ConicProblem,
    pub groups: Vec<RowGroup>,
}

/// A conic problem with maps back to named arrays.
#[derive(Debug, Clone)]
pub struct ConicModel {
    pub formulation: Formulation,
    pub problem: ConicProblem,
    pub(crate) vars: VarMap,
    pub(crate) groups: Vec<RowGroup>,
}

impl ConicModel {
    pub fn n_vars(&self) -> usize {
        self.problem.n()
    }

    /// Number of rows in the zero cone.
    pub fn n_equalities(&self) -> usize {
        self.problem.cones.iter().map(|c| if let Cone::Zero(d) = c { *d } else { 0 }).sum()
    }

    pub fn primal(&self, x: &[f64], net: &Network) -> Point {
        self.vars.to_point(x, primal_keys(self.formulation), net)
    }

    pub fn dual(&self, y: &[f64], net: &Network) -> Point {
        let mut p = zero_point(dual_keys(self.formulation), net);
        for g in &self.groups {
            let arr = p.get_mut(g.key).expect("group key in schema");
            for (&e, &r) in g.elems.iter().zip(&g.rows) {
                for t in 0..g.width {
                    arr[e * g.width + t] += g.sign * y[r + t];
                }
            }
        }
        p
    }

    /// Column vector for a named point (inactive entries ignored).
    pub fn point_to_x(&self, point: &Point) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.n_vars()];
        for blk in &self.vars.blocks {
            let arr = point.get(blk.key).ok_or_else(|| Error::Missing(blk.key.to_string()))?;
            for (k, &e) in blk.elems.iter().enumerate() {
                x[blk.start + k] = *arr.get(e).ok_or_else(|| Error::Missing(format!("{}[{}]", blk.key, e + 1)))?;
            }
        }
        Ok(x)
    }
}

/// Tolerances used for each formulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveSettings {
    pub dc: SolverOptions,
    pub soc: SolverOptions,
    pub ac: SolverOptions,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            dc: SolverOptions { tol: 1e-11, feas_tol: Some(1e-10), ..SolverOptions::lp() },
            soc: SolverOptions { tol: 1e-8, feas_tol: Some(1e-8), max_iter: 200, ..SolverOptions::conic() },
            ac: SolverOptions { tol: 1e-8, max_iter: 1000, ..SolverOptions::nlp() },
        }
    }
}

impl SolveSettings {
    pub fn for_formulation(&self, f: Formulation) -> &SolverOptions {
        match f {
            Formulation::Ac => &self.ac,
            Formulation::Dc => &self.dc,
            Formulation::Soc => &self.soc,
        }
    }
}

/// Outcome of one solve with named arrays.
#[derive(Debug, Clone)]
pub struct Solved {
    pub formulation: Formulation,
    pub status: SolveStatus,
    pub primal: Point,
    pub dual: Point,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub solve_time: f64,
    pub build_time: f64,
    pub extract_time: f64,
}

/// Builds, solves and extracts one formulation.
pub fn solve(f: Formulation, net: &Network, input: &InstanceInput, settings: &SolveSettings) -> Result<Solved> {
    let opts = settings.for_formulation(f);
    let t0 = Instant::now();
    match f {
        Formulation::Dc | Formulation::Soc => {
            let model = if f == Formulation::Dc { build_dcopf(net, input)? } else { build_socopf(net, input)? };
            let build_time = t0.elapsed().as_secs_f64();
            let res = if f == Formulation::Dc { solve_lp(&model.problem, opts)? } else { solve_conic(&model.problem, opts)? };
            let t1 = Instant::now();
            let primal = model.primal(&res.x, net);
            let dual = model.dual(&res.y, net);
            Ok(finish(f, res, primal, dual, build_time, t1.elapsed().as_secs_f64()))
        }
        Formulation::Ac => {
            let p = build_acopf(net, input)?;
            let build_time = t0.elapsed().as_secs_f64();
            let res = solve_nlp(&p, opts, None)?;
            let t1 = Instant::now();
            let primal = p.primal(&res.x);
            let dual = p.dual(&res);
            Ok(finish(f, res, primal, dual, build_time, t1.elapsed().as_secs_f64()))
        }
    }
}

fn finish(f: Formulation, res: SolveResult, primal: Point, dual: Point, build: f64, extract: f64) -> Solved {
    Solved {
        formulation: f,
        status: res.status,
        primal,
        dual,
        primal_objective: res.primal_objective,
        dual_objective: res.dual_objective,
        iterations: res.iterations,
        solve_time: res.solve_time,
        build_time: build,
        extract_time: extract,
    }
}

/// Nonnegative violation per constraint group, keyed like the dual arrays.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResidualReport {
    pub groups: BTreeMap<String, Vec<f64>>,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.groups.values().flatten().fold(0.0, |m, v| m.max(*v))
    }

    pub fn group_max(&self, key: &str) -> f64 {
        self.groups.get(key).map_or(0.0, |g| g.iter().fold(0.0, |m, v| m.max(*v)))
    }

    pub(crate) fn set(&mut self, key: &str, v: Vec<f64>) {
        self.groups.insert(key.to_string(), v);
    }
}

pub(crate) fn get<'a>(point: &'a Point, key: &str, len: usize) -> Result<&'a [f64]> {
    let v = point.get(key).ok_or_else(|| Error::Missing(key.to_string()))?;
    if v.len() != len {
        return Err(Error::Shape { key: key.to_string(), expected: vec![len], found: vec![v.len()] });
    }
    Ok(v)
}

pub(crate) fn lower(x: f64, lo: f64) -> f64 {
    (lo - x).max(0.0)
}

pub(crate) fn upper(x: f64, hi: f64) -> f64 {
    (x - hi).max(0.0)
}

/// Bound residuals of an array restricted to active entries.
pub(crate) fn bound_groups(
    rep: &mut ResidualReport,
    name: &str,
    x: &[f64],
    lo: impl Fn(usize) -> f64,
    hi: impl Fn(usize) -> f64,
    on: impl Fn(usize) -> bool,
) {
    let lb = (0..x.len()).map(|k| if on(k) { lower(x[k], lo(k)) } else { 0.0 }).collect();
    let ub = (0..x.len()).map(|k| if on(k) { upper(x[k], hi(k)) } else { 0.0 }).collect();
    rep.set(&format!("{name}_lb"), lb);
    rep.set(&format!("{name}_ub"), ub);
}

/// Primal constraint violations of a named point.
pub fn evaluate_residuals(f: Formulation, net: &Network, input: &InstanceInput, point: &Point) -> Result<ResidualReport> {
    let act = Active::new(net, input)?;
    match f {
        Formulation::Dc => dc::residuals(net, input, &act, point),
        Formulation::Soc => soc::residuals(net, input, &act, point),
        Formulation::Ac => ac::residuals(net, input, &act, point),
    }
}

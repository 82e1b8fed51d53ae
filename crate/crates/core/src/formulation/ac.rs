//! Full nonlinear model in polar voltage coordinates.

use super::{bound_groups, get, zero_point, Active, Point, ResidualReport, VarMap};
use crate::error::Result;
use crate::network::Network;
use crate::sampler::InstanceInput;
use crate::schema::{dual_keys, primal_keys, Formulation};
use opfkit_solver::{NlpProblem, SolveResult};
use std::collections::HashMap;

/// Coefficients of `α vi² + β vj² + vi vj (A cos δ + B sin δ)`, δ = θi − θj.
#[derive(Debug, Clone, Copy)]
struct FlowTerm {
    alpha: f64,
    beta: f64,
    a: f64,
    b: f64,
}

impl FlowTerm {
    fn value(&self, vi: f64, vj: f64, d: f64) -> f64 {
        let (s, c) = d.sin_cos();
        self.alpha * vi * vi + self.beta * vj * vj + vi * vj * (self.a * c + self.b * s)
    }
}

/// The four flow expressions of a branch, from and to side.
fn flow_terms(net: &Network, e: usize) -> [FlowTerm; 4] {
    let y = &net.y[e];
    [
        FlowTerm { alpha: y.gff, beta: 0.0, a: y.gft, b: y.bft },
        FlowTerm { alpha: -y.bff, beta: 0.0, a: -y.bft, b: y.gft },
        FlowTerm { alpha: 0.0, beta: y.gtt, a: y.gtf, b: -y.btf },
        FlowTerm { alpha: 0.0, beta: -y.btt, a: -y.btf, b: -y.gtf },
    ]
}

/// Polar AC model over the in-service elements of one instance.
#[derive(Debug, Clone)]
pub struct AcProblem<'a> {
    net: &'a Network,
    act: Active,
    vars: VarMap,
    pd: Vec<f64>,
    qd: Vec<f64>,
    gpos: Vec<usize>,
    epos: Vec<usize>,
    terms: Vec<[FlowTerm; 4]>,
    m: usize,
    hess_slots: Vec<usize>,
    hess_pairs: Vec<(usize, usize)>,
}

const PG: usize = 0;
const QG: usize = 1;
const PF: usize = 2;
const QF: usize = 3;
const PT: usize = 4;
const QT: usize = 5;
const VM: usize = 6;
const VA: usize = 7;

pub fn build_acopf<'a>(net: &'a Network, input: &InstanceInput) -> Result<AcProblem<'a>> {
    let act = Active::new(net, input)?;
    let nb = net.n_bus();
    let mut vars = VarMap::default();
    for key in ["pg", "qg"] {
        vars.add(key, act.gens.clone());
    }
    for key in ["pf", "qf", "pt", "qt"] {
        vars.add(key, act.branches.clone());
    }
    vars.add("vm", (0..nb).collect());
    vars.add("va", (0..nb).collect());
    let mut gpos = vec![usize::MAX; net.n_gen()];
    for (k, &g) in act.gens.iter().enumerate() {
        gpos[g] = k;
    }
    let mut epos = vec![usize::MAX; net.n_branch()];
    for (k, &e) in act.branches.iter().enumerate() {
        epos[e] = k;
    }
    let (pd, qd) = Active::bus_demand(net, input);
    let terms = act.branches.iter().map(|&e| flow_terms(net, e)).collect();
    let m = 2 * nb + 7 * act.branches.len() + 1;
    let mut p =
        AcProblem { net, act, vars, pd, qd, gpos, epos, terms, m, hess_slots: vec![], hess_pairs: vec![] };
    let x0 = p.initial_point();
    let lam = vec![1.0; p.m];
    let mut seq = Vec::new();
    p.hess(&x0, 1.0, &lam, &mut |r, c, _| seq.push((r, c)));
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut slots = Vec::with_capacity(seq.len());
    for rc in seq {
        let next = index.len();
        let s = *index.entry(rc).or_insert(next);
        if s == p.hess_pairs.len() {
            p.hess_pairs.push(rc);
        }
        slots.push(s);
    }
    p.hess_slots = slots;
    Ok(p)
}

impl<'a> AcProblem<'a> {
    fn col(&self, blk: usize, pos: usize) -> usize {
        self.vars.col(blk, pos)
    }

    fn nb(&self) -> usize {
        self.net.n_bus()
    }

    fn ne(&self) -> usize {
        self.act.branches.len()
    }

    /// Row offsets of each constraint group.
    fn rows(&self) -> [usize; 10] {
        let (nb, ne) = (self.nb(), self.ne());
        let kp = 0;
        let kq = nb;
        let o = 2 * nb;
        [kp, kq, o, o + ne, o + 2 * ne, o + 3 * ne, o + 4 * ne, o + 5 * ne, o + 6 * ne, o + 7 * ne]
    }

    fn branch_cols(&self, k: usize) -> (usize, usize, usize, usize) {
        let e = self.act.branches[k];
        let (i, j) = (self.net.from[e], self.net.to[e]);
        (self.col(VM, i), self.col(VM, j), self.col(VA, i), self.col(VA, j))
    }

    fn jac(&self, x: &[f64], f: &mut impl FnMut(usize, usize, f64)) {
        let net = self.net;
        let [kp, kq, opf, _, _, _, smf, smt, dva, slack] = self.rows();
        for i in 0..self.nb() {
            let vm = x[self.col(VM, i)];
            for &g in &net.bus_gens[i] {
                if self.act.gen_on[g] {
                    f(kp + i, self.col(PG, self.gpos[g]), 1.0);
                    f(kq + i, self.col(QG, self.gpos[g]), 1.0);
                }
            }
            for &e in &net.bus_arcs_fr[i] {
                if self.act.branch_on[e] {
                    f(kp + i, self.col(PF, self.epos[e]), -1.0);
                    f(kq + i, self.col(QF, self.epos[e]), -1.0);
                }
            }
            for &e in &net.bus_arcs_to[i] {
                if self.act.branch_on[e] {
                    f(kp + i, self.col(PT, self.epos[e]), -1.0);
                    f(kq + i, self.col(QT, self.epos[e]), -1.0);
                }
            }
            f(kp + i, self.col(VM, i), -2.0 * net.gs[i] * vm);
            f(kq + i, self.col(VM, i), 2.0 * net.bs[i] * vm);
        }
        let ne = self.ne();
        for k in 0..ne {
            let (ci, cj, ti, tj) = self.branch_cols(k);
            let (vi, vj) = (x[ci], x[cj]);
            let d = x[ti] - x[tj];
            let (s, c) = d.sin_cos();
            for (t, ft) in self.terms[k].iter().enumerate() {
                let row = opf + t * ne + k;
                let cs = ft.a * c + ft.b * s;
                let dd = vi * vj * (ft.b * c - ft.a * s);
                f(row, ci, 2.0 * ft.alpha * vi + vj * cs);
                f(row, cj, 2.0 * ft.beta * vj + vi * cs);
                f(row, ti, dd);
                f(row, tj, -dd);
                f(row, self.col(PF + t, k), -1.0);
            }
            f(smf + k, self.col(PF, k), 2.0 * x[self.col(PF, k)]);
            f(smf + k, self.col(QF, k), 2.0 * x[self.col(QF, k)]);
            f(smt + k, self.col(PT, k), 2.0 * x[self.col(PT, k)]);
            f(smt + k, self.col(QT, k), 2.0 * x[self.col(QT, k)]);
            f(dva + k, ti, 1.0);
            f(dva + k, tj, -1.0);
        }
        f(slack, self.col(VA, net.ref_bus), 1.0);
    }

    fn hess(&self, x: &[f64], _obj: f64, lam: &[f64], f: &mut impl FnMut(usize, usize, f64)) {
        let net = self.net;
        let mut put = |r: usize, c: usize, v: f64| if r >= c { f(r, c, v) } else { f(c, r, v) };
        let [kp, kq, opf, _, _, _, smf, smt, _, _] = self.rows();
        for i in 0..self.nb() {
            let c = self.col(VM, i);
            put(c, c, 2.0 * (-net.gs[i] * lam[kp + i] + net.bs[i] * lam[kq + i]));
        }
        let ne = self.ne();
        for k in 0..ne {
            let (ci, cj, ti, tj) = self.branch_cols(k);
            let (vi, vj) = (x[ci], x[cj]);
            let d = x[ti] - x[tj];
            let (s, c) = d.sin_cos();
            let (mut hii, mut hjj, mut hij, mut hit, mut hjt, mut htt) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for (t, ft) in self.terms[k].iter().enumerate() {
                let l = lam[opf + t * ne + k];
                let cs = ft.a * c + ft.b * s;
                let ds = ft.b * c - ft.a * s;
                hii += l * 2.0 * ft.alpha;
                hjj += l * 2.0 * ft.beta;
                hij += l * cs;
                hit += l * vj * ds;
                hjt += l * vi * ds;
                htt += l * (-vi * vj * cs);
            }
            put(ci, ci, hii);
            put(cj, cj, hjj);
            put(cj, ci, hij);
            put(ti, ci, hit);
            put(tj, ci, -hit);
            put(ti, cj, hjt);
            put(tj, cj, -hjt);
            put(ti, ti, htt);
            put(tj, tj, htt);
            put(tj, ti, -htt);
            for (blk, row) in [(PF, smf), (QF, smf), (PT, smt), (QT, smt)] {
                let cc = self.col(blk, k);
                put(cc, cc, 2.0 * lam[row + k]);
            }
        }
    }

    /// Named primal arrays at a solver point.
    pub fn primal(&self, x: &[f64]) -> Point {
        self.vars.to_point(x, primal_keys(Formulation::Ac), self.net)
    }

    /// Named dual arrays from a solver result.
    pub fn dual(&self, res: &SolveResult) -> Point {
        let net = self.net;
        let mut p = zero_point(dual_keys(Formulation::Ac), net);
        let [kp, kq, opf, _, _, _, smf, smt, dva, slack] = self.rows();
        let ne = self.ne();
        let y = &res.y;
        p.insert("kcl_p".into(), y[kp..kp + self.nb()].to_vec());
        p.insert("kcl_q".into(), y[kq..kq + self.nb()].to_vec());
        p.insert("slack_bus".into(), vec![y[slack]]);
        for (k, &e) in self.act.branches.iter().enumerate() {
            for (t, key) in ["ohm_pf", "ohm_qf", "ohm_pt", "ohm_qt"].iter().enumerate() {
                p.get_mut(*key).unwrap()[e] = y[opf + t * ne + k];
            }
            p.get_mut("sm_fr").unwrap()[e] = y[smf + k];
            p.get_mut("sm_to").unwrap()[e] = y[smt + k];
            p.get_mut("va_diff").unwrap()[e] = y[dva + k];
        }
        for blk in &self.vars.blocks {
            if blk.key == "va" {
                continue;
            }
            for (k, &el) in blk.elems.iter().enumerate() {
                let j = blk.start + k;
                p.get_mut(&format!("{}_lb", blk.key)).unwrap()[el] = res.z_lb[j];
                p.get_mut(&format!("{}_ub", blk.key)).unwrap()[el] = res.z_ub[j];
            }
        }
        p
    }

    /// Variable vector for a named point.
    pub fn point_to_x(&self, point: &Point) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.vars.n];
        for blk in &self.vars.blocks {
            let arr = get(point, blk.key, primal_len(self.net, blk.key))?;
            for (k, &e) in blk.elems.iter().enumerate() {
                x[blk.start + k] = arr[e];
            }
        }
        Ok(x)
    }

    /// Row multipliers for a named dual point, in solver order.
    pub fn dual_to_y(&self, dual: &Point) -> Result<Vec<f64>> {
        let net = self.net;
        let (nb, ne) = (self.nb(), self.ne());
        let [kp, kq, opf, _, _, _, smf, smt, dva, slack] = self.rows();
        let mut y = vec![0.0; self.m];
        y[kp..kp + nb].copy_from_slice(get(dual, "kcl_p", nb)?);
        y[kq..kq + nb].copy_from_slice(get(dual, "kcl_q", nb)?);
        y[slack] = get(dual, "slack_bus", 1)?[0];
        let nbr = net.n_branch();
        let groups = [
            (get(dual, "ohm_pf", nbr)?, opf),
            (get(dual, "ohm_qf", nbr)?, opf + ne),
            (get(dual, "ohm_pt", nbr)?, opf + 2 * ne),
            (get(dual, "ohm_qt", nbr)?, opf + 3 * ne),
            (get(dual, "sm_fr", nbr)?, smf),
            (get(dual, "sm_to", nbr)?, smt),
            (get(dual, "va_diff", nbr)?, dva),
        ];
        for (arr, off) in groups {
            for (k, &e) in self.act.branches.iter().enumerate() {
                y[off + k] = arr[e];
            }
        }
        Ok(y)
    }

    /// Bound multipliers for a named dual point, in solver order.
    pub fn dual_to_z(&self, dual: &Point) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut zl = vec![0.0; self.vars.n];
        let mut zu = vec![0.0; self.vars.n];
        for blk in &self.vars.blocks {
            if blk.key == "va" {
                continue;
            }
            let len = primal_len(self.net, blk.key);
            let lb = get(dual, &format!("{}_lb", blk.key), len)?;
            let ub = get(dual, &format!("{}_ub", blk.key), len)?;
            for (k, &e) in blk.elems.iter().enumerate() {
                zl[blk.start + k] = lb[e];
                zu[blk.start + k] = ub[e];
            }
        }
        Ok((zl, zu))
    }

    /// Sparse Jacobian entries at `x`.
    pub fn jacobian_triplets(&self, x: &[f64]) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        self.jac(x, &mut |r, c, v| out.push((r, c, v)));
        out
    }

    /// Bounds and row ranges, used by the optimality checks.
    pub fn active(&self) -> &Active {
        &self.act
    }
}

fn primal_len(net: &Network, key: &str) -> usize {
    match key {
        "pg" | "qg" => net.n_gen(),
        "vm" | "va" => net.n_bus(),
        _ => net.n_branch(),
    }
}

impl NlpProblem for AcProblem<'_> {
    fn num_vars(&self) -> usize {
        self.vars.n
    }

    fn num_cons(&self) -> usize {
        self.m
    }

    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let net = self.net;
        let n = self.vars.n;
        let (mut lo, mut hi) = (vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n]);
        for (k, &g) in self.act.gens.iter().enumerate() {
            (lo[self.col(PG, k)], hi[self.col(PG, k)]) = (net.pmin[g], net.pmax[g]);
            (lo[self.col(QG, k)], hi[self.col(QG, k)]) = (net.qmin[g], net.qmax[g]);
        }
        for (k, &e) in self.act.branches.iter().enumerate() {
            for blk in [PF, QF, PT, QT] {
                (lo[self.col(blk, k)], hi[self.col(blk, k)]) = (-net.smax[e], net.smax[e]);
            }
        }
        for i in 0..self.nb() {
            (lo[self.col(VM, i)], hi[self.col(VM, i)]) = (net.vmin[i], net.vmax[i]);
        }
        (lo, hi)
    }

    fn con_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let net = self.net;
        let [kp, kq, _, _, _, _, smf, smt, dva, _] = self.rows();
        let (mut lo, mut hi) = (vec![0.0; self.m], vec![0.0; self.m]);
        for i in 0..self.nb() {
            (lo[kp + i], hi[kp + i]) = (self.pd[i], self.pd[i]);
            (lo[kq + i], hi[kq + i]) = (self.qd[i], self.qd[i]);
        }
        for (k, &e) in self.act.branches.iter().enumerate() {
            let s2 = net.smax[e] * net.smax[e];
            (lo[smf + k], hi[smf + k]) = (f64::NEG_INFINITY, s2);
            (lo[smt + k], hi[smt + k]) = (f64::NEG_INFINITY, s2);
            (lo[dva + k], hi[dva + k]) = (net.dvamin[e], net.dvamax[e]);
        }
        (lo, hi)
    }

    fn initial_point(&self) -> Vec<f64> {
        let net = self.net;
        let mut x = vec![0.0; self.vars.n];
        for (k, &g) in self.act.gens.iter().enumerate() {
            x[self.col(PG, k)] = 0.5 * (net.pmin[g] + net.pmax[g]);
            x[self.col(QG, k)] = 0.5 * (net.qmin[g] + net.qmax[g]);
        }
        for i in 0..self.nb() {
            x[self.col(VM, i)] = 0.5 * (net.vmin[i] + net.vmax[i]);
        }
        for (k, &e) in self.act.branches.iter().enumerate() {
            let (vi, vj) = (x[self.col(VM, net.from[e])], x[self.col(VM, net.to[e])]);
            for (t, ft) in self.terms[k].iter().enumerate() {
                x[self.col(PF + t, k)] = ft.value(vi, vj, 0.0).clamp(-net.smax[e], net.smax[e]);
            }
        }
        x
    }

    fn objective(&self, x: &[f64]) -> f64 {
        self.act.gens.iter().enumerate().map(|(k, &g)| self.net.cost[g] * x[self.col(PG, k)]).sum()
    }

    fn gradient(&self, _x: &[f64], grad: &mut [f64]) {
        grad.iter_mut().for_each(|v| *v = 0.0);
        for (k, &g) in self.act.gens.iter().enumerate() {
            grad[self.col(PG, k)] = self.net.cost[g];
        }
    }

    fn constraints(&self, x: &[f64], g: &mut [f64]) {
        let net = self.net;
        let [kp, kq, opf, _, _, _, smf, smt, dva, slack] = self.rows();
        g.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.nb() {
            let vm = x[self.col(VM, i)];
            g[kp + i] = -net.gs[i] * vm * vm;
            g[kq + i] = net.bs[i] * vm * vm;
        }
        for (k, &gi) in self.act.gens.iter().enumerate() {
            let b = net.gen_bus[gi];
            g[kp + b] += x[self.col(PG, k)];
            g[kq + b] += x[self.col(QG, k)];
        }
        let ne = self.ne();
        for (k, &e) in self.act.branches.iter().enumerate() {
            let (i, j) = (net.from[e], net.to[e]);
            let (ci, cj, ti, tj) = self.branch_cols(k);
            let d = x[ti] - x[tj];
            for (t, ft) in self.terms[k].iter().enumerate() {
                g[opf + t * ne + k] = ft.value(x[ci], x[cj], d) - x[self.col(PF + t, k)];
            }
            let (pf, qf, pt, qt) =
                (x[self.col(PF, k)], x[self.col(QF, k)], x[self.col(PT, k)], x[self.col(QT, k)]);
            g[kp + i] -= pf;
            g[kq + i] -= qf;
            g[kp + j] -= pt;
            g[kq + j] -= qt;
            g[smf + k] = pf * pf + qf * qf;
            g[smt + k] = pt * pt + qt * qt;
            g[dva + k] = d;
        }
        g[slack] = x[self.col(VA, net.ref_bus)];
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        let x = self.initial_point();
        let mut out = Vec::new();
        self.jac(&x, &mut |r, c, _| out.push((r, c)));
        out
    }

    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        let mut k = 0;
        self.jac(x, &mut |_, _, v| {
            vals[k] = v;
            k += 1;
        });
    }

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        self.hess_pairs.clone()
    }

    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], vals: &mut [f64]) {
        vals.iter_mut().for_each(|v| *v = 0.0);
        let mut k = 0;
        let slots = &self.hess_slots;
        self.hess(x, obj_factor, lambda, &mut |_, _, v| {
            vals[slots[k]] += v;
            k += 1;
        });
    }
}

pub(crate) fn residuals(net: &Network, input: &InstanceInput, act: &Active, p: &Point) -> Result<ResidualReport> {
    let (nb, ne, ng) = (net.n_bus(), net.n_branch(), net.n_gen());
    let pg = get(p, "pg", ng)?;
    let qg = get(p, "qg", ng)?;
    let vm = get(p, "vm", nb)?;
    let va = get(p, "va", nb)?;
    let flows = [get(p, "pf", ne)?, get(p, "qf", ne)?, get(p, "pt", ne)?, get(p, "qt", ne)?];
    let (pd, qd) = Active::bus_demand(net, input);
    let mut rep = ResidualReport::default();
    let mut bp: Vec<f64> = (0..nb).map(|i| -pd[i] - net.gs[i] * vm[i] * vm[i]).collect();
    let mut bq: Vec<f64> = (0..nb).map(|i| -qd[i] + net.bs[i] * vm[i] * vm[i]).collect();
    for &g in &act.gens {
        bp[net.gen_bus[g]] += pg[g];
        bq[net.gen_bus[g]] += qg[g];
    }
    let mut ohm = [vec![0.0; ne], vec![0.0; ne], vec![0.0; ne], vec![0.0; ne]];
    let (mut smf, mut smt, mut dva) = (vec![0.0; ne], vec![0.0; ne], vec![0.0; ne]);
    for &e in &act.branches {
        let (i, j) = (net.from[e], net.to[e]);
        bp[i] -= flows[0][e];
        bq[i] -= flows[1][e];
        bp[j] -= flows[2][e];
        bq[j] -= flows[3][e];
        let d = va[i] - va[j];
        for (t, ft) in flow_terms(net, e).iter().enumerate() {
            ohm[t][e] = (ft.value(vm[i], vm[j], d) - flows[t][e]).abs();
        }
        smf[e] = (flows[0][e].hypot(flows[1][e]) - net.smax[e]).max(0.0);
        smt[e] = (flows[2][e].hypot(flows[3][e]) - net.smax[e]).max(0.0);
        dva[e] = (net.dvamin[e] - d).max(0.0) + (d - net.dvamax[e]).max(0.0);
    }
    rep.set("kcl_p", bp.iter().map(|v| v.abs()).collect());
    rep.set("kcl_q", bq.iter().map(|v| v.abs()).collect());
    for (name, v) in ["ohm_pf", "ohm_qf", "ohm_pt", "ohm_qt"].iter().zip(ohm) {
        rep.set(name, v);
    }
    rep.set("sm_fr", smf);
    rep.set("sm_to", smt);
    rep.set("va_diff", dva);
    rep.set("slack_bus", vec![va[net.ref_bus].abs()]);
    let on = |e: usize| act.branch_on[e];
    bound_groups(&mut rep, "pg", pg, |g| net.pmin[g], |g| net.pmax[g], |g| act.gen_on[g]);
    bound_groups(&mut rep, "qg", qg, |g| net.qmin[g], |g| net.qmax[g], |g| act.gen_on[g]);
    bound_groups(&mut rep, "vm", vm, |i| net.vmin[i], |i| net.vmax[i], |_| true);
    for (name, x) in ["pf", "qf", "pt", "qt"].iter().zip(flows) {
        bound_groups(&mut rep, name, x, |e| -net.smax[e], |e| net.smax[e], on);
    }
    Ok(rep)
}

//! Second-order cone relaxation in lifted voltage products.

use super::{bound_groups, get, Active, ConicBuilder, ConicModel, Point, ResidualReport, Section, VarMap};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::sampler::InstanceInput;
use crate::schema::Formulation;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

/// Bounds `(wr_lb, wr_ub, wi_lb, wi_ub)` on `vi·vj·cos(δ)` and `vi·vj·sin(δ)`
/// over the voltage boxes and the angle window.
pub fn derive_w_bounds(
    vmin_i: f64,
    vmax_i: f64,
    vmin_j: f64,
    vmax_j: f64,
    dva_min: f64,
    dva_max: f64,
) -> Result<(f64, f64, f64, f64)> {
    if !(-FRAC_PI_2 < dva_min && dva_min <= 0.0 && 0.0 <= dva_max && dva_max < FRAC_PI_2) {
        return Err(Error::Network(format!("angle window [{dva_min}, {dva_max}] must satisfy -pi/2 < min <= 0 <= max < pi/2")));
    }
    if !(0.0 <= vmin_i && vmin_i <= vmax_i && 0.0 <= vmin_j && vmin_j <= vmax_j) {
        return Err(Error::Network("voltage bounds must satisfy 0 <= vmin <= vmax".into()));
    }
    let vv = vmax_i * vmax_j;
    let wr_lb = vmin_i * vmin_j * dva_min.abs().max(dva_max).cos();
    Ok((wr_lb, vv, vv * dva_min.sin(), vv * dva_max.sin()))
}

pub fn build_socopf(net: &Network, input: &InstanceInput) -> Result<ConicModel> {
    let act = Active::new(net, input)?;
    let nb = net.n_bus();
    let mut vars = VarMap::default();
    let gens = act.gens.clone();
    let brs = act.branches.clone();
    let pg = vars.add("pg", gens.clone());
    let qg = vars.add("qg", gens.clone());
    let pf = vars.add("pf", brs.clone());
    let qf = vars.add("qf", brs.clone());
    let pt = vars.add("pt", brs.clone());
    let qt = vars.add("qt", brs.clone());
    let w = vars.add("w", (0..nb).collect());
    let wr = vars.add("wr", brs.clone());
    let wi = vars.add("wi", brs.clone());
    let mut gpos = vec![usize::MAX; net.n_gen()];
    for (k, &g) in gens.iter().enumerate() {
        gpos[g] = k;
    }
    let mut epos = vec![usize::MAX; net.n_branch()];
    for (k, &e) in brs.iter().enumerate() {
        epos[e] = k;
    }
    let (pd, qd) = Active::bus_demand(net, input);
    let mut cb = ConicBuilder::default();

    let kp = cb.group("kcl_p", Section::Eq, 1, 1.0);
    let kq = cb.group("kcl_q", Section::Eq, 1, 1.0);
    for i in 0..nb {
        let mut rp = vec![(vars.col(w, i), -net.gs[i])];
        let mut rq = vec![(vars.col(w, i), net.bs[i])];
        for &g in &net.bus_gens[i] {
            if act.gen_on[g] {
                rp.push((vars.col(pg, gpos[g]), 1.0));
                rq.push((vars.col(qg, gpos[g]), 1.0));
            }
        }
        for &e in &net.bus_arcs_fr[i] {
            if act.branch_on[e] {
                rp.push((vars.col(pf, epos[e]), -1.0));
                rq.push((vars.col(qf, epos[e]), -1.0));
            }
        }
        for &e in &net.bus_arcs_to[i] {
            if act.branch_on[e] {
                rp.push((vars.col(pt, epos[e]), -1.0));
                rq.push((vars.col(qt, epos[e]), -1.0));
            }
        }
        cb.eq(kp, i, &rp, pd[i]);
        cb.eq(kq, i, &rq, qd[i]);
    }

    let opf = cb.group("ohm_pf", Section::Eq, 1, 1.0);
    let oqf = cb.group("ohm_qf", Section::Eq, 1, 1.0);
    let opt = cb.group("ohm_pt", Section::Eq, 1, 1.0);
    let oqt = cb.group("ohm_qt", Section::Eq, 1, 1.0);
    for (k, &e) in brs.iter().enumerate() {
        let y = &net.y[e];
        let (wf, wt) = (vars.col(w, net.from[e]), vars.col(w, net.to[e]));
        let (r, m) = (vars.col(wr, k), vars.col(wi, k));
        cb.eq(opf, e, &[(wf, y.gff), (r, y.gft), (m, y.bft), (vars.col(pf, k), -1.0)], 0.0);
        cb.eq(oqf, e, &[(wf, -y.bff), (r, -y.bft), (m, y.gft), (vars.col(qf, k), -1.0)], 0.0);
        cb.eq(opt, e, &[(wt, y.gtt), (r, y.gtf), (m, -y.btf), (vars.col(pt, k), -1.0)], 0.0);
        cb.eq(oqt, e, &[(wt, -y.btt), (r, -y.btf), (m, -y.gtf), (vars.col(qt, k), -1.0)], 0.0);
    }

    let dlo = cb.group("va_diff_lb", Section::Ineq, 1, 1.0);
    let dhi = cb.group("va_diff_ub", Section::Ineq, 1, -1.0);
    for (k, &e) in brs.iter().enumerate() {
        let (r, m) = (vars.col(wr, k), vars.col(wi, k));
        cb.ge(dlo, e, &[(m, 1.0), (r, -net.dvamin[e].tan())], 0.0);
        cb.le(dhi, e, &[(m, 1.0), (r, -net.dvamax[e].tan())], 0.0);
    }
    let mut bounds = |key_lb: &'static str, key_ub: &'static str, blk: usize, elems: &[usize], lo: &dyn Fn(usize) -> f64, hi: &dyn Fn(usize) -> f64| {
        let gl = cb.group(key_lb, Section::Ineq, 1, 1.0);
        let gu = cb.group(key_ub, Section::Ineq, 1, -1.0);
        for (k, &el) in elems.iter().enumerate() {
            cb.ge(gl, el, &[(vars.col(blk, k), 1.0)], lo(el));
            cb.le(gu, el, &[(vars.col(blk, k), 1.0)], hi(el));
        }
    };
    let all_bus: Vec<usize> = (0..nb).collect();
    bounds("w_lb", "w_ub", w, &all_bus, &|i| net.vmin[i].powi(2), &|i| net.vmax[i].powi(2));
    let mut wb = vec![(0.0, 0.0, 0.0, 0.0); net.n_branch()];
    for &e in &brs {
        let (i, j) = (net.from[e], net.to[e]);
        wb[e] = derive_w_bounds(net.vmin[i], net.vmax[i], net.vmin[j], net.vmax[j], net.dvamin[e], net.dvamax[e])?;
    }
    bounds("wr_lb", "wr_ub", wr, &brs, &|e| wb[e].0, &|e| wb[e].1);
    bounds("wi_lb", "wi_ub", wi, &brs, &|e| wb[e].2, &|e| wb[e].3);
    bounds("pg_lb", "pg_ub", pg, &gens, &|g| net.pmin[g], &|g| net.pmax[g]);
    bounds("qg_lb", "qg_ub", qg, &gens, &|g| net.qmin[g], &|g| net.qmax[g]);
    let s = |e: usize| net.smax[e];
    let ms = |e: usize| -net.smax[e];
    bounds("pf_lb", "pf_ub", pf, &brs, &ms, &s);
    bounds("qf_lb", "qf_ub", qf, &brs, &ms, &s);
    bounds("pt_lb", "pt_ub", pt, &brs, &ms, &s);
    bounds("qt_lb", "qt_ub", qt, &brs, &ms, &s);

    let smf = cb.group("sm_fr", Section::Soc, 3, 1.0);
    let smt = cb.group("sm_to", Section::Soc, 3, 1.0);
    for (k, &e) in brs.iter().enumerate() {
        let consts = [net.smax[e], 0.0, 0.0];
        cb.cone(smf, e, &[vec![], vec![(vars.col(pf, k), 1.0)], vec![(vars.col(qf, k), 1.0)]], &consts);
        cb.cone(smt, e, &[vec![], vec![(vars.col(pt, k), 1.0)], vec![(vars.col(qt, k), 1.0)]], &consts);
    }
    let jabr = cb.group("jabr", Section::Rsoc, 4, 1.0);
    for (k, &e) in brs.iter().enumerate() {
        let rows = [
            vec![(vars.col(w, net.from[e]), FRAC_1_SQRT_2)],
            vec![(vars.col(w, net.to[e]), FRAC_1_SQRT_2)],
            vec![(vars.col(wr, k), 1.0)],
            vec![(vars.col(wi, k), 1.0)],
        ];
        cb.cone(jabr, e, &rows, &[0.0; 4]);
    }

    let mut c = vec![0.0; vars.n];
    for (k, &g) in gens.iter().enumerate() {
        c[vars.col(pg, k)] = net.cost[g];
    }
    let parts = cb.finish(c);
    Ok(ConicModel { formulation: Formulation::Soc, problem: parts.problem, vars, groups: parts.groups })
}

pub(crate) fn residuals(net: &Network, input: &InstanceInput, act: &Active, p: &Point) -> Result<ResidualReport> {
    let (nb, ne, ng) = (net.n_bus(), net.n_branch(), net.n_gen());
    let pg = get(p, "pg", ng)?;
    let qg = get(p, "qg", ng)?;
    let w = get(p, "w", nb)?;
    let wr = get(p, "wr", ne)?;
    let wi = get(p, "wi", ne)?;
    let pf = get(p, "pf", ne)?;
    let pt = get(p, "pt", ne)?;
    let qf = get(p, "qf", ne)?;
    let qt = get(p, "qt", ne)?;
    let (pd, qd) = Active::bus_demand(net, input);
    let mut rep = ResidualReport::default();

    let mut bp: Vec<f64> = (0..nb).map(|i| -pd[i] - net.gs[i] * w[i]).collect();
    let mut bq: Vec<f64> = (0..nb).map(|i| -qd[i] + net.bs[i] * w[i]).collect();
    for &g in &act.gens {
        bp[net.gen_bus[g]] += pg[g];
        bq[net.gen_bus[g]] += qg[g];
    }
    for &e in &act.branches {
        bp[net.from[e]] -= pf[e];
        bq[net.from[e]] -= qf[e];
        bp[net.to[e]] -= pt[e];
        bq[net.to[e]] -= qt[e];
    }
    rep.set("kcl_p", bp.iter().map(|v| v.abs()).collect());
    rep.set("kcl_q", bq.iter().map(|v| v.abs()).collect());

    let mut groups: [Vec<f64>; 9] = Default::default();
    for g in groups.iter_mut() {
        *g = vec![0.0; ne];
    }
    for &e in &act.branches {
        let y = &net.y[e];
        let (wf, wt) = (w[net.from[e]], w[net.to[e]]);
        groups[0][e] = (y.gff * wf + y.gft * wr[e] + y.bft * wi[e] - pf[e]).abs();
        groups[1][e] = (-y.bff * wf - y.bft * wr[e] + y.gft * wi[e] - qf[e]).abs();
        groups[2][e] = (y.gtt * wt + y.gtf * wr[e] - y.btf * wi[e] - pt[e]).abs();
        groups[3][e] = (-y.btt * wt - y.btf * wr[e] - y.gtf * wi[e] - qt[e]).abs();
        groups[4][e] = (pf[e].hypot(qf[e]) - net.smax[e]).max(0.0);
        groups[5][e] = (pt[e].hypot(qt[e]) - net.smax[e]).max(0.0);
        groups[6][e] = (wr[e] * wr[e] + wi[e] * wi[e] - wf * wt).max(0.0);
        groups[7][e] = (net.dvamin[e].tan() * wr[e] - wi[e]).max(0.0);
        groups[8][e] = (wi[e] - net.dvamax[e].tan() * wr[e]).max(0.0);
    }
    let names = ["ohm_pf", "ohm_qf", "ohm_pt", "ohm_qt", "sm_fr", "sm_to", "jabr", "va_diff_lb", "va_diff_ub"];
    for (n, g) in names.iter().zip(groups) {
        rep.set(n, g);
    }
    bound_groups(&mut rep, "w", w, |i| net.vmin[i].powi(2), |i| net.vmax[i].powi(2), |_| true);
    let mut wb = vec![(0.0, 0.0, 0.0, 0.0); ne];
    for &e in &act.branches {
        let (i, j) = (net.from[e], net.to[e]);
        wb[e] = derive_w_bounds(net.vmin[i], net.vmax[i], net.vmin[j], net.vmax[j], net.dvamin[e], net.dvamax[e])?;
    }
    let on = |e: usize| act.branch_on[e];
    bound_groups(&mut rep, "wr", wr, |e| wb[e].0, |e| wb[e].1, on);
    bound_groups(&mut rep, "wi", wi, |e| wb[e].2, |e| wb[e].3, on);
    bound_groups(&mut rep, "pg", pg, |g| net.pmin[g], |g| net.pmax[g], |g| act.gen_on[g]);
    bound_groups(&mut rep, "qg", qg, |g| net.qmin[g], |g| net.qmax[g], |g| act.gen_on[g]);
    for (name, x) in [("pf", pf), ("qf", qf), ("pt", pt), ("qt", qt)] {
        bound_groups(&mut rep, name, x, |e| -net.smax[e], |e| net.smax[e], on);
    }
    Ok(rep)
}

//! Linearized lossless model over active power and angles.

use super::{bound_groups, get, upper, Active, ConicBuilder, ConicModel, Point, ResidualReport, Section, VarMap};
use crate::error::Result;
use crate::network::Network;
use crate::sampler::InstanceInput;
use crate::schema::Formulation;

/// Builds the linear program. Angle bounds appear only through branch
/// angle-difference rows; phase shifters and nodal shunt susceptance are
/// ignored.
pub fn build_dcopf(net: &Network, input: &InstanceInput) -> Result<ConicModel> {
    let act = Active::new(net, input)?;
    let nb = net.n_bus();
    let mut vars = VarMap::default();
    let pg = vars.add("pg", act.gens.clone());
    let pf = vars.add("pf", act.branches.clone());
    let va = vars.add("va", (0..nb).collect());
    let mut gpos = vec![usize::MAX; net.n_gen()];
    for (k, &g) in act.gens.iter().enumerate() {
        gpos[g] = k;
    }
    let mut epos = vec![usize::MAX; net.n_branch()];
    for (k, &e) in act.branches.iter().enumerate() {
        epos[e] = k;
    }
    let (pd, _) = Active::bus_demand(net, input);

    let mut cb = ConicBuilder::default();
    let kcl = cb.group("kcl", Section::Eq, 1, 1.0);
    for i in 0..nb {
        let mut row = Vec::new();
        for &g in &net.bus_gens[i] {
            if act.gen_on[g] {
                row.push((vars.col(pg, gpos[g]), 1.0));
            }
        }
        for &e in &net.bus_arcs_fr[i] {
            if act.branch_on[e] {
                row.push((vars.col(pf, epos[e]), -1.0));
            }
        }
        for &e in &net.bus_arcs_to[i] {
            if act.branch_on[e] {
                row.push((vars.col(pf, epos[e]), 1.0));
            }
        }
        cb.eq(kcl, i, &row, pd[i] + net.gs[i]);
    }
    let ohm = cb.group("ohm", Section::Eq, 1, 1.0);
    for (k, &e) in act.branches.iter().enumerate() {
        let b = net.y[e].b;
        let (i, j) = (net.from[e], net.to[e]);
        cb.eq(ohm, e, &[(vars.col(va, i), -b), (vars.col(va, j), b), (vars.col(pf, k), -1.0)], 0.0);
    }
    let slack = cb.group("slack_bus", Section::Eq, 1, 1.0);
    cb.eq(slack, 0, &[(vars.col(va, net.ref_bus), 1.0)], 0.0);

    let dva_lo = cb.group("va_diff", Section::Ineq, 1, 1.0);
    let dva_hi = cb.group("va_diff", Section::Ineq, 1, -1.0);
    for &e in &act.branches {
        let d = [(vars.col(va, net.from[e]), 1.0), (vars.col(va, net.to[e]), -1.0)];
        cb.ge(dva_lo, e, &d, net.dvamin[e]);
        cb.le(dva_hi, e, &d, net.dvamax[e]);
    }
    let pg_lb = cb.group("pg_lb", Section::Ineq, 1, 1.0);
    let pg_ub = cb.group("pg_ub", Section::Ineq, 1, -1.0);
    for (k, &g) in act.gens.iter().enumerate() {
        cb.ge(pg_lb, g, &[(vars.col(pg, k), 1.0)], net.pmin[g]);
        cb.le(pg_ub, g, &[(vars.col(pg, k), 1.0)], net.pmax[g]);
    }
    let pf_lb = cb.group("pf_lb", Section::Ineq, 1, 1.0);
    let pf_ub = cb.group("pf_ub", Section::Ineq, 1, -1.0);
    for (k, &e) in act.branches.iter().enumerate() {
        cb.ge(pf_lb, e, &[(vars.col(pf, k), 1.0)], -net.smax[e]);
        cb.le(pf_ub, e, &[(vars.col(pf, k), 1.0)], net.smax[e]);
    }

    let mut c = vec![0.0; vars.n];
    for (k, &g) in act.gens.iter().enumerate() {
        c[vars.col(pg, k)] = net.cost[g];
    }
    let parts = cb.finish(c);
    Ok(ConicModel { formulation: Formulation::Dc, problem: parts.problem, vars, groups: parts.groups })
}

pub(crate) fn residuals(net: &Network, input: &InstanceInput, act: &Active, p: &Point) -> Result<ResidualReport> {
    let (nb, ne, ng) = (net.n_bus(), net.n_branch(), net.n_gen());
    let pg = get(p, "pg", ng)?;
    let pf = get(p, "pf", ne)?;
    let va = get(p, "va", nb)?;
    let (pd, _) = Active::bus_demand(net, input);
    let mut rep = ResidualReport::default();

    let mut bal: Vec<f64> = (0..nb).map(|i| -(pd[i] + net.gs[i])).collect();
    for &g in &act.gens {
        bal[net.gen_bus[g]] += pg[g];
    }
    for &e in &act.branches {
        bal[net.from[e]] -= pf[e];
        bal[net.to[e]] += pf[e];
    }
    rep.set("kcl", bal.iter().map(|v| v.abs()).collect());
    let mut ohm = vec![0.0; ne];
    let mut dva = vec![0.0; ne];
    for &e in &act.branches {
        let d = va[net.from[e]] - va[net.to[e]];
        ohm[e] = (-net.y[e].b * d - pf[e]).abs();
        dva[e] = (net.dvamin[e] - d).max(0.0) + upper(d, net.dvamax[e]);
    }
    rep.set("ohm", ohm);
    rep.set("va_diff", dva);
    rep.set("slack_bus", vec![va[net.ref_bus].abs()]);
    bound_groups(&mut rep, "pg", pg, |g| net.pmin[g], |g| net.pmax[g], |g| act.gen_on[g]);
    bound_groups(&mut rep, "pf", pf, |e| -net.smax[e], |e| net.smax[e], |e| act.branch_on[e]);
    Ok(rep)
}

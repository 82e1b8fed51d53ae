//! Dual objectives, dual feasibility and optimality checks.
//!
//! Multipliers follow one convention throughout: for a row `g(x) rel rhs`
//! with multiplier `y`, stationarity reads `∇f = Σ y ∇g`. Rows and bounds of
//! the `≥` kind carry `y ≥ 0`, those of the `≤` kind carry `y ≤ 0`, and
//! equality rows are free. Cone rows `(t, u) ∈ K` carry duals in `K`.
//!
//! Everything here is written directly from the dual models and does not
//! reuse the assembled solver matrices, so it doubles as an independent
//! check of the solver output.

use crate::error::{Error, Result};
use crate::formulation::{build_acopf, derive_w_bounds, get, Active, Point, ResidualReport};
use crate::network::Network;
use crate::sampler::InstanceInput;
use crate::schema::Formulation;
use opfkit_solver::NlpProblem;
use std::f64::consts::FRAC_1_SQRT_2;

/// A dual bound together with its distance to a primal objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub valid_bound: f64,
    pub gap: f64,
}

fn conic_only(f: Formulation) -> Result<()> {
    if f == Formulation::Ac {
        return Err(Error::Input("dual bounds are only defined for the DC and SOC models".into()));
    }
    Ok(())
}

/// Dual objective value of a named dual point.
pub fn dual_objective(f: Formulation, net: &Network, input: &InstanceInput, duals: &Point) -> Result<f64> {
    conic_only(f)?;
    let act = Active::new(net, input)?;
    match f {
        Formulation::Dc => dc_objective(net, input, &act, duals),
        _ => soc_objective(net, input, &act, duals),
    }
}

/// Shorthand for the DC dual objective.
pub fn dual_objective_dc(net: &Network, input: &InstanceInput, duals: &Point) -> Result<f64> {
    dual_objective(Formulation::Dc, net, input, duals)
}

fn gen_terms(net: &Network, act: &Active, d: &Point, reactive: bool) -> Result<f64> {
    let ng = net.n_gen();
    let (pl, pu) = (get(d, "pg_lb", ng)?, get(d, "pg_ub", ng)?);
    let mut acc = 0.0;
    for &g in &act.gens {
        acc += net.pmin[g] * pl[g] + net.pmax[g] * pu[g];
    }
    if reactive {
        let (ql, qu) = (get(d, "qg_lb", ng)?, get(d, "qg_ub", ng)?);
        for &g in &act.gens {
            acc += net.qmin[g] * ql[g] + net.qmax[g] * qu[g];
        }
    }
    Ok(acc)
}

fn dc_objective(net: &Network, input: &InstanceInput, act: &Active, d: &Point) -> Result<f64> {
    let (nb, ne) = (net.n_bus(), net.n_branch());
    let lam = get(d, "kcl", nb)?;
    let dva = get(d, "va_diff", ne)?;
    let (fl, fu) = (get(d, "pf_lb", ne)?, get(d, "pf_ub", ne)?);
    get(d, "ohm", ne)?;
    get(d, "slack_bus", 1)?;
    let (pd, _) = Active::bus_demand(net, input);
    let mut obj: f64 = (0..nb).map(|i| lam[i] * (pd[i] + net.gs[i])).sum();
    obj += gen_terms(net, act, d, false)?;
    for &e in &act.branches {
        // one stored multiplier per angle row: positive on the lower side
        obj += if dva[e] >= 0.0 { net.dvamin[e] * dva[e] } else { net.dvamax[e] * dva[e] };
        obj += net.smax[e] * (fu[e] - fl[e]);
    }
    Ok(obj)
}

fn soc_objective(net: &Network, input: &InstanceInput, act: &Active, d: &Point) -> Result<f64> {
    let (nb, ne) = (net.n_bus(), net.n_branch());
    let (lp, lq) = (get(d, "kcl_p", nb)?, get(d, "kcl_q", nb)?);
    let (pd, qd) = Active::bus_demand(net, input);
    let mut obj: f64 = (0..nb).map(|i| lp[i] * pd[i] + lq[i] * qd[i]).sum();
    obj += gen_terms(net, act, d, true)?;
    let (wl, wu) = (get(d, "w_lb", nb)?, get(d, "w_ub", nb)?);
    for i in 0..nb {
        obj += net.vmin[i].powi(2) * wl[i] + net.vmax[i].powi(2) * wu[i];
    }
    let nf = get(d, "sm_fr", 3 * ne)?;
    let nt = get(d, "sm_to", 3 * ne)?;
    let mut flows = Vec::new();
    for key in ["pf", "qf", "pt", "qt"] {
        flows.push((get(d, &format!("{key}_lb"), ne)?, get(d, &format!("{key}_ub"), ne)?));
    }
    let (rl, ru) = (get(d, "wr_lb", ne)?, get(d, "wr_ub", ne)?);
    let (il, iu) = (get(d, "wi_lb", ne)?, get(d, "wi_ub", ne)?);
    for &e in &act.branches {
        let s = net.smax[e];
        obj -= s * (nf[3 * e] + nt[3 * e]);
        for (lb, ub) in &flows {
            obj += s * (ub[e] - lb[e]);
        }
        let (i, j) = (net.from[e], net.to[e]);
        let (a, b, c, dd) =
            derive_w_bounds(net.vmin[i], net.vmax[i], net.vmin[j], net.vmax[j], net.dvamin[e], net.dvamax[e])?;
        obj += a * rl[e] + b * ru[e] + c * il[e] + dd * iu[e];
    }
    Ok(obj)
}

fn sign_groups(rep: &mut ResidualReport, d: &Point, name: &str, len: usize, on: impl Fn(usize) -> bool) -> Result<()> {
    let lb = get(d, &format!("{name}_lb"), len)?;
    let ub = get(d, &format!("{name}_ub"), len)?;
    rep.groups.insert(
        format!("{name}_lb"),
        (0..len).map(|k| if on(k) { (-lb[k]).max(0.0) } else { 0.0 }).collect(),
    );
    rep.groups.insert(format!("{name}_ub"), (0..len).map(|k| if on(k) { ub[k].max(0.0) } else { 0.0 }).collect());
    Ok(())
}

/// Residuals of the dual constraints.
///
/// Groups named after a primal variable (`pg`, `pf`, `va`, `w`, ...) hold
/// the absolute residual of the stationarity row of that variable. Groups
/// named after a bound dual (`pg_lb`, ...) hold sign violations, and the cone
/// groups (`sm_fr`, `sm_to`, `jabr`) hold the distance outside the dual cone.
pub fn dual_feasibility_residuals(
    f: Formulation,
    net: &Network,
    input: &InstanceInput,
    duals: &Point,
) -> Result<ResidualReport> {
    conic_only(f)?;
    let act = Active::new(net, input)?;
    match f {
        Formulation::Dc => dc_feasibility(net, &act, duals),
        _ => soc_feasibility(net, &act, duals),
    }
}

fn dc_feasibility(net: &Network, act: &Active, d: &Point) -> Result<ResidualReport> {
    let (nb, ne, ng) = (net.n_bus(), net.n_branch(), net.n_gen());
    let lam = get(d, "kcl", nb)?;
    let ohm = get(d, "ohm", ne)?;
    let dva = get(d, "va_diff", ne)?;
    let slack = get(d, "slack_bus", 1)?[0];
    let (gl, gu) = (get(d, "pg_lb", ng)?, get(d, "pg_ub", ng)?);
    let (fl, fu) = (get(d, "pf_lb", ne)?, get(d, "pf_ub", ne)?);
    let mut rep = ResidualReport::default();

    let mut pg = vec![0.0; ng];
    for &g in &act.gens {
        pg[g] = (lam[net.gen_bus[g]] + gl[g] + gu[g] - net.cost[g]).abs();
    }
    let mut pf = vec![0.0; ne];
    let mut va = vec![0.0; nb];
    va[net.ref_bus] += slack;
    for &e in &act.branches {
        let (i, j) = (net.from[e], net.to[e]);
        pf[e] = (-lam[i] + lam[j] - ohm[e] + fl[e] + fu[e]).abs();
        let b = net.y[e].b;
        va[i] += dva[e] - b * ohm[e];
        va[j] += -dva[e] + b * ohm[e];
    }
    rep.groups.insert("pg".into(), pg);
    rep.groups.insert("pf".into(), pf);
    rep.groups.insert("va".into(), va.iter().map(|v| v.abs()).collect());
    sign_groups(&mut rep, d, "pg", ng, |g| act.gen_on[g])?;
    sign_groups(&mut rep, d, "pf", ne, |e| act.branch_on[e])?;
    Ok(rep)
}

fn soc_shortfall(t: f64, u: &[f64]) -> f64 {
    (u.iter().map(|v| v * v).sum::<f64>().sqrt() - t).max(0.0)
}

fn soc_feasibility(net: &Network, act: &Active, d: &Point) -> Result<ResidualReport> {
    let (nb, ne, ng) = (net.n_bus(), net.n_branch(), net.n_gen());
    let (lp, lq) = (get(d, "kcl_p", nb)?, get(d, "kcl_q", nb)?);
    let lpf = get(d, "ohm_pf", ne)?;
    let lqf = get(d, "ohm_qf", ne)?;
    let lpt = get(d, "ohm_pt", ne)?;
    let lqt = get(d, "ohm_qt", ne)?;
    let nf = get(d, "sm_fr", 3 * ne)?;
    let nt = get(d, "sm_to", 3 * ne)?;
    let om = get(d, "jabr", 4 * ne)?;
    let (al, au) = (get(d, "va_diff_lb", ne)?, get(d, "va_diff_ub", ne)?);
    let bound = |k: &str, n: usize| -> Result<(&[f64], &[f64])> {
        Ok((get(d, &format!("{k}_lb"), n)?, get(d, &format!("{k}_ub"), n)?))
    };
    let (pgl, pgu) = bound("pg", ng)?;
    let (qgl, qgu) = bound("qg", ng)?;
    let (wl, wu) = bound("w", nb)?;
    let (rl, ru) = bound("wr", ne)?;
    let (il, iu) = bound("wi", ne)?;
    let (pfl, pfu) = bound("pf", ne)?;
    let (qfl, qfu) = bound("qf", ne)?;
    let (ptl, ptu) = bound("pt", ne)?;
    let (qtl, qtu) = bound("qt", ne)?;
    let mut rep = ResidualReport::default();

    let (mut pg, mut qg) = (vec![0.0; ng], vec![0.0; ng]);
    for &g in &act.gens {
        let i = net.gen_bus[g];
        pg[g] = (lp[i] + pgl[g] + pgu[g] - net.cost[g]).abs();
        qg[g] = (lq[i] + qgl[g] + qgu[g]).abs();
    }
    let mut w: Vec<f64> = (0..nb).map(|i| -net.gs[i] * lp[i] + net.bs[i] * lq[i] + wl[i] + wu[i]).collect();
    let mut flows = [vec![0.0; ne], vec![0.0; ne], vec![0.0; ne], vec![0.0; ne]];
    let (mut wr, mut wi) = (vec![0.0; ne], vec![0.0; ne]);
    let (mut cf, mut ct, mut cj) = (vec![0.0; ne], vec![0.0; ne], vec![0.0; ne]);
    for &e in &act.branches {
        let (i, j) = (net.from[e], net.to[e]);
        let y = &net.y[e];
        flows[0][e] = (-lp[i] - lpf[e] + nf[3 * e + 1] + pfl[e] + pfu[e]).abs();
        flows[1][e] = (-lq[i] - lqf[e] + nf[3 * e + 2] + qfl[e] + qfu[e]).abs();
        flows[2][e] = (-lp[j] - lpt[e] + nt[3 * e + 1] + ptl[e] + ptu[e]).abs();
        flows[3][e] = (-lq[j] - lqt[e] + nt[3 * e + 2] + qtl[e] + qtu[e]).abs();
        let o = &om[4 * e..4 * e + 4];
        w[i] += y.gff * lpf[e] - y.bff * lqf[e] + o[0] * FRAC_1_SQRT_2;
        w[j] += y.gtt * lpt[e] - y.btt * lqt[e] + o[1] * FRAC_1_SQRT_2;
        let (tl, tu) = (net.dvamin[e].tan(), net.dvamax[e].tan());
        wr[e] = (y.gft * lpf[e] - y.bft * lqf[e] + y.gtf * lpt[e] - y.btf * lqt[e] - tl * al[e] - tu * au[e]
            + o[2]
            + rl[e]
            + ru[e])
            .abs();
        wi[e] = (y.bft * lpf[e] + y.gft * lqf[e] - y.btf * lpt[e] - y.gtf * lqt[e] + al[e] + au[e] + o[3] + il[e] + iu[e])
            .abs();
        cf[e] = soc_shortfall(nf[3 * e], &nf[3 * e + 1..3 * e + 3]);
        ct[e] = soc_shortfall(nt[3 * e], &nt[3 * e + 1..3 * e + 3]);
        // rotated cone mapped to the standard one
        let head = (o[0] + o[1]) * FRAC_1_SQRT_2;
        cj[e] = soc_shortfall(head, &[(o[0] - o[1]) * FRAC_1_SQRT_2, o[2], o[3]]);
    }
    rep.groups.insert("pg".into(), pg);
    rep.groups.insert("qg".into(), qg);
    rep.groups.insert("w".into(), w.iter().map(|v| v.abs()).collect());
    for (k, v) in ["pf", "qf", "pt", "qt"].iter().zip(flows) {
        rep.groups.insert(k.to_string(), v);
    }
    rep.groups.insert("wr".into(), wr);
    rep.groups.insert("wi".into(), wi);
    rep.groups.insert("sm_fr".into(), cf);
    rep.groups.insert("sm_to".into(), ct);
    rep.groups.insert("jabr".into(), cj);
    let on_g = |g: usize| act.gen_on[g];
    let on_e = |e: usize| act.branch_on[e];
    sign_groups(&mut rep, d, "pg", ng, on_g)?;
    sign_groups(&mut rep, d, "qg", ng, on_g)?;
    sign_groups(&mut rep, d, "w", nb, |_| true)?;
    sign_groups(&mut rep, d, "va_diff", ne, on_e)?;
    for k in ["wr", "wi", "pf", "qf", "pt", "qt"] {
        sign_groups(&mut rep, d, k, ne, on_e)?;
    }
    Ok(rep)
}

/// Turns dual-feasible multipliers into a bound on the optimal cost.
///
/// Fails when any dual residual exceeds `tol`, since the bound would not be
/// valid.
pub fn weak_duality_certificate(
    f: Formulation,
    net: &Network,
    input: &InstanceInput,
    duals: &Point,
    primal_objective: f64,
    tol: f64,
) -> Result<Certificate> {
    let res = dual_feasibility_residuals(f, net, input, duals)?;
    let worst = res.max();
    if !(worst <= tol) {
        let key = res.groups.keys().max_by(|a, b| res.group_max(a).total_cmp(&res.group_max(b))).cloned();
        let key = key.unwrap_or_default();
        return Err(Error::Input(format!("duals are infeasible: residual {worst:.3e} in group `{key}`")));
    }
    let valid_bound = dual_objective(f, net, input, duals)?;
    Ok(Certificate { valid_bound, gap: primal_objective - valid_bound })
}

/// First-order optimality residuals of an AC point and its multipliers.
///
/// Groups: `stationarity` per variable, `primal_eq` per equality row,
/// `primal_ineq` per inequality row and bounded variable, `dual_sign` and
/// `complementarity` per inequality row and bounded variable.
pub fn kkt_residuals_ac(net: &Network, input: &InstanceInput, primal: &Point, duals: &Point) -> Result<ResidualReport> {
    let p = build_acopf(net, input)?;
    let x = p.point_to_x(primal)?;
    let y = p.dual_to_y(duals)?;
    let (zl, zu) = p.dual_to_z(duals)?;
    let (n, m) = (p.num_vars(), p.num_cons());
    let (xl, xu) = p.var_bounds();
    let (gl, gu) = p.con_bounds();

    let mut st = vec![0.0; n];
    p.gradient(&x, &mut st);
    let mut jv = vec![0.0; p.jacobian_structure().len()];
    p.jacobian_values(&x, &mut jv);
    for ((r, c), v) in p.jacobian_structure().into_iter().zip(&jv) {
        st[c] -= y[r] * v;
    }
    for j in 0..n {
        st[j] -= zl[j] + zu[j];
    }
    let mut g = vec![0.0; m];
    p.constraints(&x, &mut g);

    let (mut eq, mut ineq, mut sign, mut comp) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..m {
        if gl[i] == gu[i] {
            eq.push((g[i] - gl[i]).abs());
            continue;
        }
        ineq.push((gl[i] - g[i]).max(0.0).max(g[i] - gu[i]));
        // a range row has one multiplier, positive at its lower side
        let (s, c) = if y[i] > 0.0 {
            (if gl[i].is_finite() { 0.0 } else { y[i] }, y[i] * (g[i] - gl[i]))
        } else {
            (if gu[i].is_finite() { 0.0 } else { -y[i] }, y[i] * (g[i] - gu[i]))
        };
        sign.push(s);
        comp.push(if c.is_finite() { c.abs() } else { 0.0 });
    }
    for j in 0..n {
        if xl[j].is_finite() {
            ineq.push((xl[j] - x[j]).max(0.0));
            sign.push((-zl[j]).max(0.0));
            comp.push((zl[j] * (x[j] - xl[j])).abs());
        }
        if xu[j].is_finite() {
            ineq.push((x[j] - xu[j]).max(0.0));
            sign.push(zu[j].max(0.0));
            comp.push((zu[j] * (xu[j] - x[j])).abs());
        }
    }
    let mut rep = ResidualReport::default();
    rep.groups.insert("stationarity".into(), st.iter().map(|v| v.abs()).collect());
    rep.groups.insert("primal_eq".into(), eq);
    rep.groups.insert("primal_ineq".into(), ineq);
    rep.groups.insert("dual_sign".into(), sign);
    rep.groups.insert("complementarity".into(), comp);
    Ok(rep)
}

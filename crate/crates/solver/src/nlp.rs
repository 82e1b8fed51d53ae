//! Primal-dual barrier method for smooth nonlinear programs
//!
//! ```text
//!     minimize f(x)  subject to  gl ≤ g(x) ≤ gu,  xl ≤ x ≤ xu
//! ```
//!
//! Rows with `gl == gu` are equalities; other rows receive a slack variable
//! carrying the row bounds. Variables with equal bounds are removed from the
//! iteration and their multipliers are recovered at the end.
//!
//! Each iteration solves the primal-dual system
//!
//! ```text
//!     [ H + Σ + δw I   Jᵀ   ] [dv]     [∇φ + Jᵀλ]
//!     [ J            −δc I  ] [dλ] = − [   c    ]
//! ```
//!
//! correcting δw until the inertia is (n, m, 0). Globalization is a
//! fraction-to-boundary rule plus Armijo backtracking on an ℓ1 merit function
//! of the barrier objective, with one second-order correction per iteration.
//! The barrier parameter decreases monotonically by a factor of ten.

use crate::ldl::{Inertia, LdlFactor, LdlSettings};
use crate::sparse::{norm_inf, CscMatrix};
use crate::{SolveResult, SolveStatus, SolverError, SolverOptions};
use std::time::Instant;

/// Smooth problem callbacks. Indices are 0-based.
pub trait NlpProblem {
    fn num_vars(&self) -> usize;
    fn num_cons(&self) -> usize;
    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn con_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn initial_point(&self) -> Vec<f64>;
    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
    fn constraints(&self, x: &[f64], g: &mut [f64]);
    /// (row, col) pairs of the constraint Jacobian.
    fn jacobian_structure(&self) -> Vec<(usize, usize)>;
    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]);
    /// (row, col) pairs with row ≥ col of the Lagrangian Hessian.
    fn hessian_structure(&self) -> Vec<(usize, usize)>;
    /// Values of ∇²(obj_factor·f + Σ lambda_i g_i) in structure order.
    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], vals: &mut [f64]);
}

const KAPPA_EPS: f64 = 10.0;
const DELTA_C: f64 = 1e-9;
const ARMIJO: f64 = 1e-4;
const KAPPA_SIGMA: f64 = 1e10;

struct Layout {
    n: usize,
    m: usize,
    free: Vec<usize>,
    fixed: Vec<usize>,
    xfix: Vec<f64>,
    rows: Vec<usize>,
    // slack column for each internal row (or usize::MAX for equalities)
    slack: Vec<usize>,
    eq_rhs: Vec<f64>,
    nv: usize,
    l: Vec<f64>,
    u: Vec<f64>,
}

impl Layout {
    fn new<P: NlpProblem + ?Sized>(p: &P) -> Result<Self, SolverError> {
        let (n, m) = (p.num_vars(), p.num_cons());
        let (xl, xu) = p.var_bounds();
        let (gl, gu) = p.con_bounds();
        if xl.len() != n || xu.len() != n || gl.len() != m || gu.len() != m {
            return Err(SolverError::Dimension("bound vectors do not match problem size".into()));
        }
        let mut free = Vec::new();
        let mut fixed = Vec::new();
        let mut xfix = vec![0.0; n];
        let (mut l, mut u) = (Vec::new(), Vec::new());
        for j in 0..n {
            if xl[j] > xu[j] {
                return Err(SolverError::Dimension(format!("variable {j} has lower bound above upper bound")));
            }
            if xl[j].is_finite() && xu[j] - xl[j] <= 1e-14 * (1.0 + xl[j].abs()) {
                fixed.push(j);
                xfix[j] = xl[j];
            } else {
                free.push(j);
                l.push(xl[j]);
                u.push(xu[j]);
            }
        }
        let nf = free.len();
        let mut rows = Vec::new();
        let mut slack = Vec::new();
        let mut eq_rhs = Vec::new();
        let mut ns = 0;
        for i in 0..m {
            if gl[i] == f64::NEG_INFINITY && gu[i] == f64::INFINITY {
                continue;
            }
            rows.push(i);
            if gl[i] == gu[i] {
                slack.push(usize::MAX);
                eq_rhs.push(gl[i]);
            } else {
                slack.push(nf + ns);
                ns += 1;
                eq_rhs.push(0.0);
                l.push(gl[i]);
                u.push(gu[i]);
            }
        }
        Ok(Layout { n, m, free, fixed, xfix, rows, slack, eq_rhs, nv: nf + ns, l, u })
    }

    fn full_x(&self, v: &[f64], x: &mut [f64]) {
        x.copy_from_slice(&self.xfix);
        for (k, &j) in self.free.iter().enumerate() {
            x[j] = v[k];
        }
    }
}

struct Work<'a, P: NlpProblem + ?Sized> {
    p: &'a P,
    lay: Layout,
    // original jacobian entry -> internal J nz position
    jac_map: Vec<usize>,
    // internal row of each structural jacobian entry
    jac_row: Vec<usize>,
    jac: CscMatrix,
    slack_pos: Vec<(usize, usize)>,
    hess_kkt: Vec<usize>,
    kkt: CscMatrix,
    kkt_jac: Vec<usize>,
    kkt_diag_v: Vec<usize>,
    kkt_diag_c: Vec<usize>,
    factor: LdlFactor,
    sf: f64,
    dc: Vec<f64>,
    x: Vec<f64>,
    jvals: Vec<f64>,
    hvals: Vec<f64>,
    g: Vec<f64>,
    grad: Vec<f64>,
}

const NONE: usize = usize::MAX;

impl<'a, P: NlpProblem + ?Sized> Work<'a, P> {
    fn new(p: &'a P, lay: Layout) -> Result<Self, SolverError> {
        let mi = lay.rows.len();
        let mut col_of = vec![NONE; lay.n];
        for (k, &j) in lay.free.iter().enumerate() {
            col_of[j] = k;
        }
        let mut row_of = vec![NONE; lay.m];
        for (k, &i) in lay.rows.iter().enumerate() {
            row_of[i] = k;
        }
        let jstruct = p.jacobian_structure();
        let (mut ri, mut ci) = (Vec::new(), Vec::new());
        for &(r, c) in &jstruct {
            if r >= lay.m || c >= lay.n {
                return Err(SolverError::Dimension(format!("jacobian entry ({r},{c}) out of range")));
            }
            if row_of[r] != NONE && col_of[c] != NONE {
                ri.push(row_of[r]);
                ci.push(col_of[c]);
            }
        }
        for (k, &s) in lay.slack.iter().enumerate() {
            if s != NONE {
                ri.push(k);
                ci.push(s);
            }
        }
        let jac = CscMatrix::from_triplets(mi, lay.nv, &ri, &ci, &vec![0.0; ri.len()]);
        let jac_map: Vec<usize> = jstruct
            .iter()
            .map(|&(r, c)| if row_of[r] != NONE && col_of[c] != NONE { jac.find(row_of[r], col_of[c]).unwrap() } else { NONE })
            .collect();
        let jac_row: Vec<usize> = jstruct.iter().map(|&(r, _)| row_of[r]).collect();
        let slack_pos: Vec<(usize, usize)> = lay
            .slack
            .iter()
            .enumerate()
            .filter(|(_, &s)| s != NONE)
            .map(|(k, &s)| (k, jac.find(k, s).unwrap()))
            .collect();

        let hstruct = p.hessian_structure();
        let nk = lay.nv + mi;
        let (mut kr, mut kc) = (Vec::new(), Vec::new());
        for j in 0..nk {
            kr.push(j);
            kc.push(j);
        }
        for &(r, c) in &hstruct {
            if r >= lay.n || c >= lay.n {
                return Err(SolverError::Dimension(format!("hessian entry ({r},{c}) out of range")));
            }
            if col_of[r] != NONE && col_of[c] != NONE {
                let (a, b) = (col_of[r].min(col_of[c]), col_of[r].max(col_of[c]));
                kr.push(a);
                kc.push(b);
            }
        }
        for j in 0..jac.ncols {
            for q in jac.colptr[j]..jac.colptr[j + 1] {
                kr.push(j);
                kc.push(lay.nv + jac.rowval[q]);
            }
        }
        let kkt = CscMatrix::from_triplets(nk, nk, &kr, &kc, &vec![0.0; kr.len()]);
        let hess_kkt: Vec<usize> = hstruct
            .iter()
            .map(|&(r, c)| {
                if col_of[r] != NONE && col_of[c] != NONE {
                    kkt.find(col_of[r].min(col_of[c]), col_of[r].max(col_of[c])).unwrap()
                } else {
                    NONE
                }
            })
            .collect();
        let mut kkt_jac = vec![0; jac.nnz()];
        for j in 0..jac.ncols {
            for q in jac.colptr[j]..jac.colptr[j + 1] {
                kkt_jac[q] = kkt.find(j, lay.nv + jac.rowval[q]).unwrap();
            }
        }
        let kkt_diag_v: Vec<usize> = (0..lay.nv).map(|j| kkt.find(j, j).unwrap()).collect();
        let kkt_diag_c: Vec<usize> = (0..mi).map(|i| kkt.find(lay.nv + i, lay.nv + i).unwrap()).collect();
        let factor = LdlFactor::new(&kkt, None, LdlSettings::default()).map_err(|e| SolverError::Dimension(e.to_string()))?;
        Ok(Work {
            p,
            x: vec![0.0; lay.n],
            jvals: vec![0.0; jstruct.len()],
            hvals: vec![0.0; hstruct.len()],
            g: vec![0.0; lay.m],
            grad: vec![0.0; lay.n],
            lay,
            jac_map,
            jac_row,
            jac,
            slack_pos,
            hess_kkt,
            kkt,
            kkt_jac,
            kkt_diag_v,
            kkt_diag_c,
            factor,
            sf: 1.0,
            dc: vec![1.0; mi],
        })
    }

    /// Scaled objective value at v.
    fn f(&mut self, v: &[f64]) -> f64 {
        self.lay.full_x(v, &mut self.x);
        self.sf * self.p.objective(&self.x)
    }

    /// Scaled constraint residuals at v.
    fn c(&mut self, v: &[f64], out: &mut [f64]) {
        self.lay.full_x(v, &mut self.x);
        self.p.constraints(&self.x, &mut self.g);
        for (k, &i) in self.lay.rows.iter().enumerate() {
            let s = self.lay.slack[k];
            let rhs = if s == NONE { self.lay.eq_rhs[k] } else { v[s] };
            out[k] = self.dc[k] * (self.g[i] - rhs);
        }
    }

    fn grad_f(&mut self, v: &[f64], out: &mut [f64]) {
        self.lay.full_x(v, &mut self.x);
        self.p.gradient(&self.x, &mut self.grad);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (k, &j) in self.lay.free.iter().enumerate() {
            out[k] = self.sf * self.grad[j];
        }
    }

    /// Refreshes the scaled Jacobian values in `self.jac`.
    fn eval_jac(&mut self, v: &[f64]) {
        self.lay.full_x(v, &mut self.x);
        self.p.jacobian_values(&self.x, &mut self.jvals);
        self.jac.nzval.iter_mut().for_each(|z| *z = 0.0);
        for (e, &pos) in self.jac_map.iter().enumerate() {
            if pos != NONE {
                self.jac.nzval[pos] += self.dc[self.jac_row[e]] * self.jvals[e];
            }
        }
        for &(k, pos) in &self.slack_pos {
            self.jac.nzval[pos] = -self.dc[k];
        }
    }
}

/// Solves a smooth NLP with a primal-dual barrier method.
pub fn solve_nlp<P: NlpProblem + ?Sized>(
    p: &P,
    opts: &SolverOptions,
    warm_start: Option<&[f64]>,
) -> Result<SolveResult, SolverError> {
    opts.validate()?;
    let start = Instant::now();
    let lay = Layout::new(p)?;
    let mut w = Work::new(p, lay)?;
    let nv = w.lay.nv;
    let mi = w.lay.rows.len();
    let (l, u) = (w.lay.l.clone(), w.lay.u.clone());
    let has_l: Vec<bool> = l.iter().map(|v| v.is_finite()).collect();
    let has_u: Vec<bool> = u.iter().map(|v| v.is_finite()).collect();

    // starting point pushed into the interior of the box
    let x0 = match warm_start {
        Some(x) if x.len() == w.lay.n => x.to_vec(),
        Some(_) => return Err(SolverError::Dimension("warm start has wrong length".into())),
        None => p.initial_point(),
    };
    let mut v = vec![0.0; nv];
    for (k, &j) in w.lay.free.iter().enumerate() {
        v[k] = x0[j];
    }
    {
        let mut xx = x0.clone();
        for &j in &w.lay.fixed {
            xx[j] = w.lay.xfix[j];
        }
        let mut g = vec![0.0; w.lay.m];
        p.constraints(&xx, &mut g);
        for (k, &s) in w.lay.slack.iter().enumerate() {
            if s != NONE {
                v[s] = g[w.lay.rows[k]];
            }
        }
    }
    for j in 0..nv {
        v[j] = push_interior(v[j], l[j], u[j]);
    }

    // gradient based scaling of objective and rows
    {
        let mut gf = vec![0.0; nv];
        w.grad_f(&v, &mut gf);
        let gn = norm_inf(&gf);
        w.sf = if gn > 100.0 { 100.0 / gn } else { 1.0 };
        w.eval_jac(&v);
        let rn = w.jac.row_norms_inf();
        for k in 0..mi {
            w.dc[k] = if rn[k] > 100.0 { 100.0 / rn[k] } else { 1.0 };
        }
    }

    let mut lam = vec![0.0; mi];
    let mut zl: Vec<f64> = has_l.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut zu: Vec<f64> = has_u.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut mu = 0.1;
    let mu_min = (opts.tol * w.sf / 10.0).min(opts.tol / 10.0);
    let mut nu = 1.0f64; // merit penalty
    let mut delta_w_last = 0.0f64;

    let nk = nv + mi;
    let mut kvals = vec![0.0; w.kkt.nnz()];
    let mut gradf = vec![0.0; nv];
    let mut cval = vec![0.0; mi];
    let mut rhs = vec![0.0; nk];
    let mut sol = vec![0.0; nk];
    let mut status = SolveStatus::IterationLimit;
    let mut iter = 0;
    let mut ls_fail = 0;
    let mut lam_full = vec![0.0; w.lay.m];

    loop {
        w.grad_f(&v, &mut gradf);
        w.c(&v, &mut cval);
        w.eval_jac(&v);

        // stationarity of the internal Lagrangian f + λᵀc − zL + zU
        let mut stat = gradf.clone();
        w.jac.gemv_t(1.0, &lam, &mut stat);
        for j in 0..nv {
            stat[j] += -zl[j] + zu[j];
        }
        let mut comp0 = 0.0f64;
        let mut comp_mu = 0.0f64;
        for j in 0..nv {
            if has_l[j] {
                let c = zl[j] * (v[j] - l[j]);
                comp0 = comp0.max(c);
                comp_mu = comp_mu.max((c - mu).abs());
            }
            if has_u[j] {
                let c = zu[j] * (u[j] - v[j]);
                comp0 = comp0.max(c);
                comp_mu = comp_mu.max((c - mu).abs());
            }
        }
        let stat_n = norm_inf(&stat);
        let feas_n = norm_inf(&cval);
        // unscaled measures
        let stat_u = stat_n / w.sf;
        let feas_u = cval.iter().zip(&w.dc).fold(0.0f64, |a, (c, d)| a.max((c / d).abs()));
        let comp_u = comp0 / w.sf;
        if opts.verbose {
            let fv = w.f(&v) / w.sf;
            eprintln!(
                "{iter:3} f {fv:+.10e} stat {stat_u:.2e} feas {feas_u:.2e} comp {comp_u:.2e} mu {mu:.1e} dw {delta_w_last:.1e}"
            );
        }
        if stat_u <= opts.tol && feas_u <= opts.feas() && comp_u <= opts.tol {
            status = SolveStatus::LocallyOptimal;
            break;
        }
        if iter >= opts.max_iter {
            break;
        }
        if let Some(limit) = opts.time_limit {
            if start.elapsed().as_secs_f64() > limit {
                break;
            }
        }
        // barrier update
        let mut e_mu = stat_n.max(feas_n).max(comp_mu);
        while e_mu <= KAPPA_EPS * mu && mu > mu_min {
            mu = (mu / 10.0).max(mu_min);
            comp_mu = 0.0;
            for j in 0..nv {
                if has_l[j] {
                    comp_mu = comp_mu.max((zl[j] * (v[j] - l[j]) - mu).abs());
                }
                if has_u[j] {
                    comp_mu = comp_mu.max((zu[j] * (u[j] - v[j]) - mu).abs());
                }
            }
            e_mu = stat_n.max(feas_n).max(comp_mu);
        }
        iter += 1;

        // Hessian of the internal Lagrangian
        w.lay.full_x(&v, &mut w.x);
        for (k, &i) in w.lay.rows.iter().enumerate() {
            lam_full[i] = w.dc[k] * lam[k];
        }
        let xcur = w.x.clone();
        p.hessian_values(&xcur, w.sf, &lam_full, &mut w.hvals);
        kvals.iter_mut().for_each(|z| *z = 0.0);
        for (e, &pos) in w.hess_kkt.iter().enumerate() {
            if pos != NONE {
                kvals[pos] += w.hvals[e];
            }
        }
        for (q, &pos) in w.kkt_jac.iter().enumerate() {
            kvals[pos] = w.jac.nzval[q];
        }
        let mut sigma = vec![0.0; nv];
        for j in 0..nv {
            if has_l[j] {
                sigma[j] += zl[j] / (v[j] - l[j]);
            }
            if has_u[j] {
                sigma[j] += zu[j] / (u[j] - v[j]);
            }
            kvals[w.kkt_diag_v[j]] += sigma[j];
        }
        // barrier gradient
        let mut gphi = gradf.clone();
        for j in 0..nv {
            if has_l[j] {
                gphi[j] -= mu / (v[j] - l[j]);
            }
            if has_u[j] {
                gphi[j] += mu / (u[j] - v[j]);
            }
        }
        for j in 0..nv {
            let mut r = gphi[j];
            for q in w.jac.colptr[j]..w.jac.colptr[j + 1] {
                r += w.jac.nzval[q] * lam[w.jac.rowval[q]];
            }
            rhs[j] = -r;
        }
        for i in 0..mi {
            rhs[nv + i] = -cval[i];
        }

        // inertia correction
        let mut delta_w = 0.0;
        let mut first = true;
        let mut ok = false;
        let mut trial = kvals.clone();
        for _ in 0..60 {
            trial.copy_from_slice(&kvals);
            for j in 0..nv {
                trial[w.kkt_diag_v[j]] += delta_w;
            }
            for i in 0..mi {
                trial[w.kkt_diag_c[i]] -= DELTA_C;
            }
            let inertia = w.factor.factor(&trial);
            let good = matches!(inertia, Ok(Inertia { positive, negative, zero: 0 }) if positive == nv && negative == mi);
            if good {
                ok = true;
                break;
            }
            if first {
                delta_w = if delta_w_last == 0.0 { 1e-4 } else { (delta_w_last / 3.0).max(1e-20) };
                first = false;
            } else {
                delta_w *= if delta_w_last == 0.0 { 100.0 } else { 8.0 };
            }
            if delta_w > 1e40 {
                break;
            }
        }
        if !ok {
            status = SolveStatus::NumericalFailure;
            break;
        }
        if delta_w > 0.0 {
            delta_w_last = delta_w;
        }
        w.kkt.nzval.copy_from_slice(&trial);
        w.factor.solve_refined(&w.kkt, &rhs, &mut sol, 5, 1e-14);
        let dv: Vec<f64> = sol[..nv].to_vec();
        let dlam: Vec<f64> = sol[nv..].to_vec();
        let mut dzl = vec![0.0; nv];
        let mut dzu = vec![0.0; nv];
        for j in 0..nv {
            if has_l[j] {
                dzl[j] = (mu - zl[j] * (v[j] - l[j]) - zl[j] * dv[j]) / (v[j] - l[j]);
            }
            if has_u[j] {
                dzu[j] = (mu - zu[j] * (u[j] - v[j]) + zu[j] * dv[j]) / (u[j] - v[j]);
            }
        }
        let tau = (1.0 - mu).max(0.99);
        let mut alpha_p = 1.0f64;
        let mut alpha_d = 1.0f64;
        for j in 0..nv {
            if has_l[j] && dv[j] < 0.0 {
                alpha_p = alpha_p.min(-tau * (v[j] - l[j]) / dv[j]);
            }
            if has_u[j] && dv[j] > 0.0 {
                alpha_p = alpha_p.min(tau * (u[j] - v[j]) / dv[j]);
            }
            if has_l[j] && dzl[j] < 0.0 {
                alpha_d = alpha_d.min(-tau * zl[j] / dzl[j]);
            }
            if has_u[j] && dzu[j] < 0.0 {
                alpha_d = alpha_d.min(-tau * zu[j] / dzu[j]);
            }
        }

        // merit function and penalty update
        let barrier = |vv: &[f64]| -> f64 {
            let mut b = 0.0;
            for j in 0..nv {
                if has_l[j] {
                    b -= mu * (vv[j] - l[j]).ln();
                }
                if has_u[j] {
                    b -= mu * (u[j] - vv[j]).ln();
                }
            }
            b
        };
        let c1 = cval.iter().map(|c| c.abs()).sum::<f64>();
        let gtd: f64 = gphi.iter().zip(&dv).map(|(a, b)| a * b).sum();
        let mut hd = vec![0.0; nk];
        let mut dfull = dv.clone();
        dfull.extend(std::iter::repeat(0.0).take(mi));
        w.kkt.sym_upper_gemv(1.0, &dfull, &mut hd);
        let dhd: f64 = hd[..nv].iter().zip(&dv).map(|(a, b)| a * b).sum();
        let lam_new = lam.iter().zip(&dlam).fold(0.0f64, |a, (x, y)| a.max((x + y).abs()));
        if c1 > 0.0 {
            let need = (gtd + 0.5 * dhd.max(0.0)) / (0.9 * c1);
            nu = nu.max(need).max(lam_new + 1e-6);
        }
        let phi0 = w.f(&v) + barrier(&v) + nu * c1;
        let dmerit = gtd - nu * c1;
        let tiny = dv.iter().zip(&v).all(|(d, x)| d.abs() <= 1e-14 * (1.0 + x.abs()));

        let mut alpha = alpha_p;
        let mut accepted = false;
        let mut vt = vec![0.0; nv];
        let mut ct = vec![0.0; mi];
        let mut used_soc: Option<(Vec<f64>, f64)> = None;
        if tiny {
            accepted = true;
        } else {
            for trial_k in 0..40 {
                for j in 0..nv {
                    vt[j] = v[j] + alpha * dv[j];
                }
                w.c(&vt, &mut ct);
                let phit = w.f(&vt) + barrier(&vt) + nu * ct.iter().map(|c| c.abs()).sum::<f64>();
                if phit.is_finite() && phit <= phi0 + ARMIJO * alpha * dmerit.min(0.0) + 1e-14 * phi0.abs() {
                    accepted = true;
                    break;
                }
                if trial_k == 0 {
                    // second-order correction: re-solve with the constraint
                    // residual at the trial point
                    let mut r2 = rhs.clone();
                    for i in 0..mi {
                        r2[nv + i] = -(alpha * cval[i] + ct[i]);
                    }
                    let mut s2 = vec![0.0; nk];
                    w.factor.solve_refined(&w.kkt, &r2, &mut s2, 5, 1e-14);
                    let mut a2 = 1.0f64;
                    for j in 0..nv {
                        if has_l[j] && s2[j] < 0.0 {
                            a2 = a2.min(-tau * (v[j] - l[j]) / s2[j]);
                        }
                        if has_u[j] && s2[j] > 0.0 {
                            a2 = a2.min(tau * (u[j] - v[j]) / s2[j]);
                        }
                    }
                    let vs: Vec<f64> = (0..nv).map(|j| v[j] + a2 * s2[j]).collect();
                    let mut cs = vec![0.0; mi];
                    w.c(&vs, &mut cs);
                    let phis = w.f(&vs) + barrier(&vs) + nu * cs.iter().map(|c| c.abs()).sum::<f64>();
                    if phis.is_finite() && phis <= phi0 + ARMIJO * alpha * dmerit.min(0.0) {
                        used_soc = Some((vs, a2));
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-14 {
                    break;
                }
            }
        }
        if !accepted {
            ls_fail += 1;
            if ls_fail >= 5 {
                status = SolveStatus::NumericalFailure;
                break;
            }
            // take a short step anyway to escape
            alpha = alpha_p.min(1e-2);
        } else {
            ls_fail = 0;
        }
        match used_soc {
            Some((vs, a2)) => {
                v = vs;
                alpha = a2.min(alpha_p);
            }
            None => {
                for j in 0..nv {
                    v[j] += alpha * dv[j];
                }
            }
        }
        for i in 0..mi {
            lam[i] += alpha * dlam[i];
        }
        for j in 0..nv {
            if has_l[j] {
                zl[j] += alpha_d * dzl[j];
                let g = v[j] - l[j];
                zl[j] = zl[j].clamp(mu / (KAPPA_SIGMA * g), KAPPA_SIGMA * mu / g);
            }
            if has_u[j] {
                zu[j] += alpha_d * dzu[j];
                let g = u[j] - v[j];
                zu[j] = zu[j].clamp(mu / (KAPPA_SIGMA * g), KAPPA_SIGMA * mu / g);
            }
        }
    }

    // map back to the caller's variables and sign convention
    let mut x = vec![0.0; w.lay.n];
    w.lay.full_x(&v, &mut x);
    let mut y = vec![0.0; w.lay.m];
    for (k, &i) in w.lay.rows.iter().enumerate() {
        y[i] = -w.dc[k] * lam[k] / w.sf;
    }
    let mut z_lb = vec![0.0; w.lay.n];
    let mut z_ub = vec![0.0; w.lay.n];
    for (k, &j) in w.lay.free.iter().enumerate() {
        z_lb[j] = zl[k] / w.sf;
        z_ub[j] = -zu[k] / w.sf;
    }
    if !w.lay.fixed.is_empty() {
        let mut grad = vec![0.0; w.lay.n];
        p.gradient(&x, &mut grad);
        let mut jv = vec![0.0; w.jvals.len()];
        p.jacobian_values(&x, &mut jv);
        let jstruct = p.jacobian_structure();
        let mut r = grad;
        for (e, &(row, col)) in jstruct.iter().enumerate() {
            r[col] -= y[row] * jv[e];
        }
        for &j in &w.lay.fixed {
            z_lb[j] = r[j].max(0.0);
            z_ub[j] = r[j].min(0.0);
        }
    }
    let primal_objective = p.objective(&x);
    Ok(SolveResult {
        status,
        x,
        y,
        z_lb,
        z_ub,
        primal_objective,
        dual_objective: f64::NAN,
        iterations: iter,
        solve_time: start.elapsed().as_secs_f64(),
    })
}

fn push_interior(x: f64, l: f64, u: f64) -> f64 {
    let k1 = 1e-2;
    match (l.is_finite(), u.is_finite()) {
        (true, true) => {
            let pl = (k1 * l.abs().max(1.0)).min(k1 * (u - l));
            let pu = (k1 * u.abs().max(1.0)).min(k1 * (u - l));
            x.clamp(l + pl, u - pu)
        }
        (true, false) => x.max(l + k1 * l.abs().max(1.0)),
        (false, true) => x.min(u - k1 * u.abs().max(1.0)),
        (false, false) => x,
    }
}

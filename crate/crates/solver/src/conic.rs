//! Homogeneous self-dual interior-point method for conic programs
//!
//! ```text
//!     minimize  cᵀx   subject to  A x − b ∈ K
//!     maximize  bᵀy   subject to  Aᵀy = c,  y ∈ K*
//! ```
//!
//! where K is a product of zero cones, nonnegative orthants, second-order
//! cones and rotated second-order cones. Internally the problem is written as
//! `G x + s = h, s ∈ K` with `G = −A`, `h = −b`, so the internal dual `z`
//! equals `y`. Rotated blocks are mapped to ordinary ones by a symmetric
//! orthogonal map before solving and the duals are mapped back afterwards.
//!
//! Each iteration computes Nesterov–Todd scalings, factors the quasi-definite
//! system
//!
//! ```text
//!     [ δI   Gᵀ      ]
//!     [ G   −W² − δI ]
//! ```
//!
//! once, and uses it for the affine and the combined Mehrotra directions.

use crate::cones::{rotate_in_place, Cone, ConeSet};
use crate::ldl::{LdlFactor, LdlSettings};
use crate::sparse::{dot, norm_inf, CscMatrix};
use crate::{SolveResult, SolveStatus, SolverError, SolverOptions};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    pub c: Vec<f64>,
    pub a: CscMatrix,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
}

impl ConicProblem {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn check(&self) -> Result<(), SolverError> {
        let m: usize = self.cones.iter().map(|c| c.dim()).sum();
        if self.a.nrows != self.b.len() || m != self.b.len() {
            return Err(SolverError::Dimension(format!(
                "A has {} rows, b has {}, cones cover {}",
                self.a.nrows,
                self.b.len(),
                m
            )));
        }
        if self.a.ncols != self.c.len() {
            return Err(SolverError::Dimension(format!("A has {} columns, c has {}", self.a.ncols, self.c.len())));
        }
        for c in &self.cones {
            match c {
                Cone::Soc(d) if *d < 2 => return Err(SolverError::UnsupportedCone(format!("Soc({d})"))),
                Cone::RotatedSoc(d) if *d < 3 => {
                    return Err(SolverError::UnsupportedCone(format!("RotatedSoc({d})")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Solves a linear program posed with zero and nonnegative cones only.
pub fn solve_lp(p: &ConicProblem, opts: &SolverOptions) -> Result<SolveResult, SolverError> {
    if let Some(c) = p.cones.iter().find(|c| !matches!(c, Cone::Zero(_) | Cone::Nonneg(_))) {
        return Err(SolverError::UnsupportedCone(format!("{c:?}")));
    }
    solve_conic(p, opts)
}

const STATIC_REG: f64 = 1e-8;
const STEP_FRACTION: f64 = 0.99;
const INFEAS_TOL: f64 = 1e-8;

struct Kkt {
    n: usize,
    m: usize,
    dim: usize,
    mat: CscMatrix,
    reg: Vec<f64>,
    diag_x: Vec<usize>,
    cone_pos: Vec<usize>,
    // static regularization added at each cone-block entry (0 off the diagonal)
    cone_reg: Vec<f64>,
    factor: LdlFactor,
    vals: Vec<f64>,
}

impl Kkt {
    fn new(g: &CscMatrix, cones: &ConeSet) -> Self {
        let (n, m) = (g.ncols, g.nrows);
        let dim = n + m + cones.n_expansion();
        let (mut ri, mut ci) = (Vec::new(), Vec::new());
        for j in 0..n {
            ri.push(j);
            ci.push(j);
        }
        for k in 0..n {
            for p in g.colptr[k]..g.colptr[k + 1] {
                ri.push(k);
                ci.push(n + g.rowval[p]);
            }
        }
        let pat = cones.expanded_pattern();
        for &(i, j) in &pat {
            ri.push(n + i);
            ci.push(n + j);
        }
        let mut mat = CscMatrix::from_triplets(dim, dim, &ri, &ci, &vec![0.0; ri.len()]);
        let diag_x: Vec<usize> = (0..n).map(|j| mat.find(j, j).unwrap()).collect();
        let cone_pos: Vec<usize> = pat.iter().map(|&(i, j)| mat.find(n + i, n + j).unwrap()).collect();
        for k in 0..n {
            for p in g.colptr[k]..g.colptr[k + 1] {
                let q = mat.find(k, n + g.rowval[p]).unwrap();
                mat.nzval[q] = g.nzval[p];
            }
        }
        // auxiliary rows alternate positive, negative
        let mut signs: Vec<f64> = (0..n + m).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
        for k in 0..cones.n_expansion() {
            signs.push(if k % 2 == 0 { 1.0 } else { -1.0 });
        }
        let cone_reg: Vec<f64> =
            pat.iter().map(|&(i, j)| if i == j { signs[n + i] * STATIC_REG } else { 0.0 }).collect();
        let factor = LdlFactor::new(&mat, Some(&signs), LdlSettings::default()).expect("KKT pattern is upper triangular");
        let reg = mat.nzval.clone();
        Kkt { n, m, dim, mat, reg, diag_x, cone_pos, cone_reg, factor, vals: Vec::new() }
    }

    fn update(&mut self, cones: &ConeSet) -> bool {
        cones.expanded_values(&mut self.vals);
        for (k, &p) in self.cone_pos.iter().enumerate() {
            self.mat.nzval[p] = self.vals[k];
        }
        self.reg.copy_from_slice(&self.mat.nzval);
        for &p in &self.diag_x {
            self.reg[p] += STATIC_REG;
        }
        for (k, &p) in self.cone_pos.iter().enumerate() {
            self.reg[p] += self.cone_reg[k];
        }
        self.factor.factor_regularized(&self.reg).is_ok()
    }

    fn solve(&self, rx: &[f64], rz: &[f64], x: &mut [f64], z: &mut [f64]) {
        let mut rhs = vec![0.0; self.dim];
        rhs[..self.n].copy_from_slice(rx);
        rhs[self.n..self.n + self.m].copy_from_slice(rz);
        let mut sol = vec![0.0; self.dim];
        self.factor.solve_refined(&self.mat, &rhs, &mut sol, 10, 1e-14);
        x.copy_from_slice(&sol[..self.n]);
        z.copy_from_slice(&sol[self.n..self.n + self.m]);
    }
}

struct Scaling {
    d: Vec<f64>,
    e: Vec<f64>,
    cscale: f64,
}

fn equilibrate(g: &mut CscMatrix, cones: &ConeSet, c: &[f64]) -> Scaling {
    let (m, n) = (g.nrows, g.ncols);
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; m];
    for _ in 0..15 {
        let cn = g.col_norms_inf();
        let mut rn = g.row_norms_inf();
        // keep scaling uniform inside each second-order block
        for b in &cones.blocks {
            if let crate::cones::Block::Soc { off, dim, .. } = b {
                let mx = rn[*off..off + dim].iter().fold(0.0f64, |a, v| a.max(*v));
                rn[*off..off + dim].iter_mut().for_each(|v| *v = mx);
            }
        }
        let dc: Vec<f64> = cn.iter().map(|&v| if v > 1e-12 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        let dr: Vec<f64> = rn.iter().map(|&v| if v > 1e-12 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        let dc: Vec<f64> = dc.iter().zip(&d).map(|(f, cur)| (f * cur).clamp(1e-4, 1e4) / cur).collect();
        let dr: Vec<f64> = dr.iter().zip(&e).map(|(f, cur)| (f * cur).clamp(1e-4, 1e4) / cur).collect();
        g.scale(&dr, &dc);
        for j in 0..n {
            d[j] *= dc[j];
        }
        for i in 0..m {
            e[i] *= dr[i];
        }
    }
    let cn = c.iter().zip(&d).fold(0.0f64, |a, (ci, di)| a.max((ci * di).abs()));
    let cscale = if cn > 0.0 { (1.0 / cn).clamp(1e-4, 1e4) } else { 1.0 };
    Scaling { d, e, cscale }
}

/// Maps user rows to internal rows: negation plus rotation of rotated blocks.
fn internal_rows(p: &ConicProblem) -> (CscMatrix, Vec<f64>, Vec<Cone>) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // 0: plain row, 1: first row of a rotated pair, 2: second row
    let mut role = vec![0u8; p.m()];
    let mut cones = Vec::with_capacity(p.cones.len());
    let mut off = 0;
    for c in &p.cones {
        if let Cone::RotatedSoc(d) = c {
            role[off] = 1;
            role[off + 1] = 2;
            cones.push(Cone::Soc(*d));
        } else {
            cones.push(*c);
        }
        off += c.dim();
    }
    // (a0, a1) -> (s(a0 + a1), s(a0 − a1))
    let (mut ri, mut ci, mut v) = (Vec::new(), Vec::new(), Vec::new());
    for j in 0..p.a.ncols {
        for q in p.a.colptr[j]..p.a.colptr[j + 1] {
            let i = p.a.rowval[q];
            let a = -p.a.nzval[q];
            match role[i] {
                0 => {
                    ri.push(i);
                    ci.push(j);
                    v.push(a);
                }
                1 => {
                    ri.extend([i, i + 1]);
                    ci.extend([j, j]);
                    v.extend([s * a, s * a]);
                }
                _ => {
                    ri.extend([i - 1, i]);
                    ci.extend([j, j]);
                    v.extend([s * a, -s * a]);
                }
            }
        }
    }
    let g = CscMatrix::from_triplets(p.m(), p.n(), &ri, &ci, &v);
    let mut h: Vec<f64> = p.b.iter().map(|x| -x).collect();
    let mut off = 0;
    for c in &p.cones {
        if let Cone::RotatedSoc(d) = c {
            rotate_in_place(&mut h[off..off + d]);
        }
        off += c.dim();
    }
    (g, h, cones)
}

/// Solves a conic program with the homogeneous self-dual embedding.
pub fn solve_conic(p: &ConicProblem, opts: &SolverOptions) -> Result<SolveResult, SolverError> {
    p.check()?;
    opts.validate()?;
    let start = Instant::now();
    let (n, m) = (p.n(), p.m());
    let (mut g, h_orig, icones) = internal_rows(p);
    let mut cones = ConeSet::new(&icones);
    let sc = equilibrate(&mut g, &cones, &p.c);
    let h: Vec<f64> = h_orig.iter().zip(&sc.e).map(|(v, e)| v * e).collect();
    let c: Vec<f64> = p.c.iter().zip(&sc.d).map(|(v, d)| v * d * sc.cscale).collect();
    let c_norm = norm_inf(&p.c);
    let h_norm = norm_inf(&h_orig);
    let feas_tol = opts.feas();

    let mut kkt = Kkt::new(&g, &cones);

    // initial point from two least-squares problems with W = I
    let ones = vec![1.0; m];
    let mut identity_cones = cones.clone();
    identity_cones.update_scaling(&identity_point(&cones, &ones), &identity_point(&cones, &ones));
    let mut x = vec![0.0; n];
    let mut z = vec![0.0; m];
    let mut s = vec![0.0; m];
    let zero_mask = cones.zero_rows();
    if !kkt.update(&identity_cones) {
        return Ok(failure(p, start, 0, SolveStatus::NumericalFailure));
    }
    {
        let zn = vec![0.0; n];
        let mut tmpz = vec![0.0; m];
        kkt.solve(&zn, &h, &mut x, &mut tmpz);
        for i in 0..m {
            s[i] = if zero_mask[i] { 0.0 } else { -tmpz[i] };
        }
        cones.shift_to_interior(&mut s);
        let negc: Vec<f64> = c.iter().map(|v| -v).collect();
        let mut tmpx = vec![0.0; n];
        kkt.solve(&negc, &vec![0.0; m], &mut tmpx, &mut z);
        cones.shift_to_interior(&mut z);
    }
    let mut tau = 1.0;
    let mut kappa = 1.0;

    let deg = cones.degree as f64 + 1.0;
    let mut rx = vec![0.0; n];
    let mut rz = vec![0.0; m];
    let mut lambda = vec![0.0; m];
    let (mut x1, mut z1) = (vec![0.0; n], vec![0.0; m]);
    let (mut x2, mut z2) = (vec![0.0; n], vec![0.0; m]);
    let mut ds = vec![0.0; m];
    let mut tmp = vec![0.0; m];
    let mut tmp2 = vec![0.0; m];
    let mut ds_rhs = vec![0.0; m];
    let mut rhs_z = vec![0.0; m];
    let mut rhs_x = vec![0.0; n];
    let negc: Vec<f64> = c.iter().map(|v| -v).collect();

    let mut status = SolveStatus::IterationLimit;
    let mut iter = 0;
    // best iterate by worst tolerance ratio, restored if the method breaks down
    let mut best: Option<(f64, Vec<f64>, Vec<f64>, f64)> = None;
    loop {
        // residuals
        rx.iter_mut().zip(&c).for_each(|(r, ci)| *r = ci * tau);
        g.gemv_t(1.0, &z, &mut rx);
        for i in 0..m {
            rz[i] = s[i] - h[i] * tau;
        }
        g.gemv(1.0, &x, &mut rz);
        let cx = dot(&c, &x);
        let hz = dot(&h, &z);
        let rtau = cx + hz + kappa;
        let mu = (dot(&s, &z) + tau * kappa) / deg;

        // unscaled measures
        let pres = rz.iter().zip(&sc.e).fold(0.0f64, |a, (r, e)| a.max((r / e).abs())) / tau;
        let dres = rx.iter().zip(&sc.d).fold(0.0f64, |a, (r, d)| a.max((r / d).abs())) / (sc.cscale * tau);
        let pobj = cx / (sc.cscale * tau);
        let dobj = -hz / (sc.cscale * tau);
        let gap = (pobj - dobj).abs();
        if opts.verbose {
            eprintln!(
                "{iter:3} pobj {pobj:+.10e} dobj {dobj:+.10e} pres {pres:.2e} dres {dres:.2e} gap {gap:.2e} mu {mu:.2e} tau {tau:.2e} kap {kappa:.2e}"
            );
        }
        let merit = (pres / (feas_tol * (1.0 + h_norm)))
            .max(dres / (feas_tol * (1.0 + c_norm)))
            .max(gap / (opts.tol * (1.0 + pobj.abs().min(dobj.abs()))));
        if let Some(b) = best.as_ref().filter(|b| b.0 < 1e2) {
            // a jump this large this close to the end means accuracy is lost
            if !(merit < 1e2 * b.0.max(1.0)) {
                status = SolveStatus::NumericalFailure;
                break;
            }
        }
        if merit.is_finite() && best.as_ref().map_or(true, |b| merit < b.0) {
            best = Some((merit, x.clone(), z.clone(), tau));
        }
        if merit <= 1.0 {
            status = SolveStatus::Optimal;
            break;
        }
        // infeasibility certificates
        if hz < 0.0 {
            let gz = {
                let mut v = vec![0.0; n];
                g.gemv_t(1.0, &z, &mut v);
                norm_inf(&v)
            };
            if gz <= INFEAS_TOL * (-hz) && tau < 1e-6 * kappa.max(1.0) {
                status = SolveStatus::InfeasibleOrUnbounded;
                break;
            }
        }
        if cx < 0.0 {
            let mut v = s.clone();
            g.gemv(1.0, &x, &mut v);
            if norm_inf(&v) <= INFEAS_TOL * (-cx) && tau < 1e-6 * kappa.max(1.0) {
                status = SolveStatus::InfeasibleOrUnbounded;
                break;
            }
        }
        if iter >= opts.max_iter {
            break;
        }
        if let Some(limit) = opts.time_limit {
            if start.elapsed().as_secs_f64() > limit {
                break;
            }
        }
        iter += 1;

        if !cones.update_scaling(&s, &z) {
            status = SolveStatus::NumericalFailure;
            break;
        }
        cones.apply_w(&z, &mut lambda);
        if !kkt.update(&cones) {
            status = SolveStatus::NumericalFailure;
            break;
        }
        kkt.solve(&negc, &h, &mut x1, &mut z1);
        let denom_base = dot(&c, &x1) + dot(&h, &z1);

        // direction for a given (sigma, ds_rhs, dkappa_rhs)
        let mut direction = |sigma: f64,
                             ds_rhs: &[f64],
                             dk_rhs: f64,
                             dx: &mut [f64],
                             dz: &mut [f64],
                             dsv: &mut [f64]|
         -> (f64, f64) {
            cones.inv_circ(&lambda, ds_rhs, &mut tmp);
            cones.apply_w(&tmp, &mut tmp2);
            for i in 0..m {
                rhs_z[i] = -(1.0 - sigma) * rz[i] + tmp2[i];
            }
            for j in 0..n {
                rhs_x[j] = -(1.0 - sigma) * rx[j];
            }
            kkt.solve(&rhs_x, &rhs_z, &mut x2, &mut z2);
            let num = -(1.0 - sigma) * rtau - dot(&c, &x2) - dot(&h, &z2) + dk_rhs / tau;
            let den = denom_base - kappa / tau;
            let dtau = num / den;
            for j in 0..n {
                dx[j] = x2[j] + dtau * x1[j];
            }
            for i in 0..m {
                dz[i] = z2[i] + dtau * z1[i];
            }
            // ds = −W(λ \ ds_rhs) − W² dz
            cones.apply_w(dz, &mut tmp);
            let mut w2dz = vec![0.0; m];
            cones.apply_w(&tmp, &mut w2dz);
            for i in 0..m {
                dsv[i] = -tmp2[i] - w2dz[i];
            }
            let dkappa = (-dk_rhs - kappa * dtau) / tau;
            (dtau, dkappa)
        };

        // affine direction
        cones.circ(&lambda, &lambda, &mut ds_rhs);
        let mut dx = vec![0.0; n];
        let mut dz = vec![0.0; m];
        let (dtau_a, dkappa_a) = direction(0.0, &ds_rhs, tau * kappa, &mut dx, &mut dz, &mut ds);
        let alpha_aff = step_length(&cones, &s, &ds, &z, &dz, tau, dtau_a, kappa, dkappa_a, 1.0);
        let sigma = (1.0 - alpha_aff).powi(3);

        // Mehrotra correction (W⁻¹ ds_a) ∘ (W dz_a)
        let mut a = vec![0.0; m];
        let mut b = vec![0.0; m];
        let mut corr = vec![0.0; m];
        cones.apply_winv(&ds, &mut a);
        cones.apply_w(&dz, &mut b);
        cones.circ(&a, &b, &mut corr);
        cones.circ(&lambda, &lambda, &mut ds_rhs);
        for i in 0..m {
            ds_rhs[i] += corr[i];
        }
        cones.add_identity(&mut ds_rhs, -sigma * mu);
        let dk_rhs = tau * kappa + dtau_a * dkappa_a - sigma * mu;
        let (dtau, dkappa) = direction(sigma, &ds_rhs, dk_rhs, &mut dx, &mut dz, &mut ds);
        let amax = step_length(&cones, &s, &ds, &z, &dz, tau, dtau, kappa, dkappa, 1.0 / STEP_FRACTION);
        let alpha = (STEP_FRACTION * amax).min(1.0);
        if !(alpha > 1e-12) {
            status = SolveStatus::NumericalFailure;
            break;
        }
        for j in 0..n {
            x[j] += alpha * dx[j];
        }
        for i in 0..m {
            s[i] += alpha * ds[i];
            z[i] += alpha * dz[i];
        }
        for i in 0..m {
            if zero_mask[i] {
                s[i] = 0.0;
            }
        }
        tau += alpha * dtau;
        kappa += alpha * dkappa;
        if !(tau > 0.0 && kappa > 0.0) || !tau.is_finite() {
            status = SolveStatus::NumericalFailure;
            break;
        }
    }

    if matches!(status, SolveStatus::NumericalFailure | SolveStatus::IterationLimit) {
        if let Some((_, bx, bz, bt)) = best.take() {
            x = bx;
            z = bz;
            tau = bt;
        }
    }
    // unscale to the user's space
    let xs: Vec<f64> = (0..n).map(|j| sc.d[j] * x[j] / tau).collect();
    let mut y: Vec<f64> = (0..m).map(|i| sc.e[i] * z[i] / (sc.cscale * tau)).collect();
    let mut off = 0;
    for cn in &p.cones {
        if let Cone::RotatedSoc(d) = cn {
            rotate_in_place(&mut y[off..off + d]);
        }
        off += cn.dim();
    }
    if status == SolveStatus::InfeasibleOrUnbounded {
        return Ok(SolveResult {
            status,
            x: xs,
            y,
            z_lb: Vec::new(),
            z_ub: Vec::new(),
            primal_objective: f64::NAN,
            dual_objective: f64::NAN,
            iterations: iter,
            solve_time: start.elapsed().as_secs_f64(),
        });
    }
    let primal_objective = dot(&p.c, &xs);
    let dual_objective = dot(&p.b, &y);
    Ok(SolveResult {
        status,
        x: xs,
        y,
        z_lb: Vec::new(),
        z_ub: Vec::new(),
        primal_objective,
        dual_objective,
        iterations: iter,
        solve_time: start.elapsed().as_secs_f64(),
    })
}

fn identity_point(cones: &ConeSet, _ones: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; cones.m];
    cones.add_identity(&mut v, 1.0);
    v
}

#[allow(clippy::too_many_arguments)]
fn step_length(
    cones: &ConeSet,
    s: &[f64],
    ds: &[f64],
    z: &[f64],
    dz: &[f64],
    tau: f64,
    dtau: f64,
    kappa: f64,
    dkappa: f64,
    amax: f64,
) -> f64 {
    let mut a = amax;
    if dtau < 0.0 {
        a = a.min(-tau / dtau);
    }
    if dkappa < 0.0 {
        a = a.min(-kappa / dkappa);
    }
    a = cones.max_step(s, ds, a);
    cones.max_step(z, dz, a)
}

fn failure(p: &ConicProblem, start: Instant, iterations: usize, status: SolveStatus) -> SolveResult {
    SolveResult {
        status,
        x: vec![f64::NAN; p.n()],
        y: vec![f64::NAN; p.m()],
        z_lb: Vec::new(),
        z_ub: Vec::new(),
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        iterations,
        solve_time: start.elapsed().as_secs_f64(),
    }
}

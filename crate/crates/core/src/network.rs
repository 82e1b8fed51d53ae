//! Preprocessed grid snapshot in per unit.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::collections::VecDeque;

/// Two-port admittance of a branch, split into real and imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Admittance {
    pub gff: f64,
    pub bff: f64,
    pub gft: f64,
    pub bft: f64,
    pub gtf: f64,
    pub btf: f64,
    pub gtt: f64,
    pub btt: f64,
    /// Series conductance and susceptance, `1/(r + jx)`.
    pub g: f64,
    pub b: f64,
}

/// Pi-model admittance of a line or transformer.
///
/// `tap` is the off-nominal ratio on the from side and `shift` the phase
/// shift in radians.
pub fn branch_admittance(r: f64, x: f64, b_c: f64, tap: f64, shift: f64) -> Result<Admittance> {
    if r * r + x * x == 0.0 {
        return Err(Error::Network("zero series impedance".into()));
    }
    if !(tap > 0.0) {
        return Err(Error::Network(format!("tap ratio {tap} must be positive")));
    }
    let ys = Complex64::new(r, x).inv();
    let half = Complex64::new(0.0, b_c / 2.0);
    let t = Complex64::from_polar(tap, shift);
    let yff = (ys + half) / (tap * tap);
    let yft = -ys / t.conj();
    let ytf = -ys / t;
    let ytt = ys + half;
    Ok(Admittance {
        gff: yff.re,
        bff: yff.im,
        gft: yft.re,
        bft: yft.im,
        gtf: ytf.re,
        btf: ytf.im,
        gtt: ytt.re,
        btt: ytt.im,
        g: ys.re,
        b: ys.im,
    })
}

/// Sparse matrix in coordinate form with 0-based indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Coo {
    pub nrows: usize,
    pub ncols: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub name: String,
    pub base_mva: f64,
    pub ref_bus: usize,

    // buses
    pub gs: Vec<f64>,
    pub bs: Vec<f64>,
    pub vmin: Vec<f64>,
    pub vmax: Vec<f64>,
    /// kV
    pub vnom: Vec<f64>,

    // generators
    pub gen_bus: Vec<usize>,
    pub pmin: Vec<f64>,
    pub pmax: Vec<f64>,
    pub qmin: Vec<f64>,
    pub qmax: Vec<f64>,
    /// Linear cost per p.u. of output.
    pub cost: Vec<f64>,

    // loads
    pub load_bus: Vec<usize>,
    pub pd: Vec<f64>,
    pub qd: Vec<f64>,

    // branches
    pub from: Vec<usize>,
    pub to: Vec<usize>,
    pub r: Vec<f64>,
    pub x: Vec<f64>,
    /// Total line charging susceptance.
    pub bc: Vec<f64>,
    pub tap: Vec<f64>,
    /// Radians.
    pub shift: Vec<f64>,
    pub y: Vec<Admittance>,
    pub smax: Vec<f64>,
    pub dvamin: Vec<f64>,
    pub dvamax: Vec<f64>,

    // adjacency, filled by `finalize`
    pub bus_arcs_fr: Vec<Vec<usize>>,
    pub bus_arcs_to: Vec<Vec<usize>>,
    pub bus_gens: Vec<Vec<usize>>,
    pub bus_loads: Vec<Vec<usize>>,
}

impl Network {
    pub fn empty(name: &str, base_mva: f64) -> Self {
        Network {
            name: name.to_string(),
            base_mva,
            ref_bus: 0,
            gs: vec![],
            bs: vec![],
            vmin: vec![],
            vmax: vec![],
            vnom: vec![],
            gen_bus: vec![],
            pmin: vec![],
            pmax: vec![],
            qmin: vec![],
            qmax: vec![],
            cost: vec![],
            load_bus: vec![],
            pd: vec![],
            qd: vec![],
            from: vec![],
            to: vec![],
            r: vec![],
            x: vec![],
            bc: vec![],
            tap: vec![],
            shift: vec![],
            y: vec![],
            smax: vec![],
            dvamin: vec![],
            dvamax: vec![],
            bus_arcs_fr: vec![],
            bus_arcs_to: vec![],
            bus_gens: vec![],
            bus_loads: vec![],
        }
    }

    pub fn n_bus(&self) -> usize {
        self.gs.len()
    }
    pub fn n_gen(&self) -> usize {
        self.gen_bus.len()
    }
    pub fn n_load(&self) -> usize {
        self.load_bus.len()
    }
    pub fn n_branch(&self) -> usize {
        self.from.len()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push_branch(
        &mut self,
        from: usize,
        to: usize,
        r: f64,
        x: f64,
        bc: f64,
        tap: f64,
        shift: f64,
        y: Admittance,
        smax: f64,
        dvamin: f64,
        dvamax: f64,
    ) {
        self.from.push(from);
        self.to.push(to);
        self.r.push(r);
        self.x.push(x);
        self.bc.push(bc);
        self.tap.push(tap);
        self.shift.push(shift);
        self.y.push(y);
        self.smax.push(smax);
        self.dvamin.push(dvamin);
        self.dvamax.push(dvamax);
    }

    /// Rebuilds the per-bus adjacency lists.
    pub fn finalize(&mut self) {
        let n = self.n_bus();
        self.bus_arcs_fr = vec![vec![]; n];
        self.bus_arcs_to = vec![vec![]; n];
        self.bus_gens = vec![vec![]; n];
        self.bus_loads = vec![vec![]; n];
        for e in 0..self.n_branch() {
            if self.from[e] < n && self.to[e] < n {
                self.bus_arcs_fr[self.from[e]].push(e);
                self.bus_arcs_to[self.to[e]].push(e);
            }
        }
        for g in 0..self.n_gen() {
            if self.gen_bus[g] < n {
                self.bus_gens[self.gen_bus[g]].push(g);
            }
        }
        for l in 0..self.n_load() {
            if self.load_bus[l] < n {
                self.bus_loads[self.load_bus[l]].push(l);
            }
        }
    }

    /// Checks every structural and bound invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_bus();
        let bad = |m: String| Err(Error::Network(m));
        if n == 0 {
            return bad("no buses".into());
        }
        if !(self.base_mva > 0.0) {
            return bad("base MVA must be positive".into());
        }
        if self.ref_bus >= n {
            return bad(format!("reference bus {} out of range", self.ref_bus + 1));
        }
        for (name, v) in [("bs", &self.bs), ("vmin", &self.vmin), ("vmax", &self.vmax), ("vnom", &self.vnom)] {
            if v.len() != n {
                return bad(format!("{name} has {} entries for {n} buses", v.len()));
            }
        }
        for i in 0..n {
            if !(self.vmin[i] <= self.vmax[i]) || self.vmin[i] < 0.0 {
                return bad(format!("bus {}: voltage bounds [{}, {}]", i + 1, self.vmin[i], self.vmax[i]));
            }
        }
        for g in 0..self.n_gen() {
            if self.gen_bus[g] >= n {
                return bad(format!("generator {} on unknown bus", g + 1));
            }
            if !(self.pmin[g] <= self.pmax[g]) || !(self.qmin[g] <= self.qmax[g]) {
                return bad(format!("generator {}: inverted bounds", g + 1));
            }
            if !self.cost[g].is_finite() {
                return bad(format!("generator {}: non-finite cost", g + 1));
            }
        }
        for l in 0..self.n_load() {
            if self.load_bus[l] >= n {
                return bad(format!("load {} on unknown bus", l + 1));
            }
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        for e in 0..self.n_branch() {
            let (f, t) = (self.from[e], self.to[e]);
            if f >= n || t >= n {
                return bad(format!("branch {} references an unknown bus", e + 1));
            }
            if f == t {
                return bad(format!("branch {} is a self loop", e + 1));
            }
            if !(self.smax[e] > 0.0) {
                return bad(format!("branch {}: thermal limit must be positive", e + 1));
            }
            let (lo, hi) = (self.dvamin[e], self.dvamax[e]);
            if !(lo <= 0.0 && 0.0 <= hi && lo > -half_pi && hi < half_pi) {
                return bad(format!("branch {}: angle window [{lo}, {hi}] must contain 0 inside (-pi/2, pi/2)", e + 1));
            }
        }
        let comps = self.components(&vec![true; self.n_branch()]);
        if comps.len() > 1 {
            let listing: Vec<String> = comps
                .iter()
                .map(|c| {
                    let ids: Vec<String> = c.iter().take(5).map(|b| (b + 1).to_string()).collect();
                    let more = if c.len() > 5 { ", ..." } else { "" };
                    format!("{{{}{more}}}", ids.join(", "))
                })
                .collect();
            return bad(format!("network is disconnected into {} components: {}", comps.len(), listing.join(" ")));
        }
        Ok(())
    }

    /// Connected components over the branches with `active[e]`.
    pub fn components(&self, active: &[bool]) -> Vec<Vec<usize>> {
        let n = self.n_bus();
        let mut adj = vec![vec![]; n];
        for e in 0..self.n_branch() {
            if active[e] {
                adj[self.from[e]].push(self.to[e]);
                adj[self.to[e]].push(self.from[e]);
            }
        }
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        q.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Branch-bus and bus-generator incidence matrices.
    ///
    /// Branch rows carry +1 at the from bus and -1 at the to bus.
    pub fn build_incidence(&self) -> (Coo, Coo) {
        let mut a = Coo { nrows: self.n_branch(), ncols: self.n_bus(), ..Default::default() };
        for e in 0..self.n_branch() {
            a.rows.extend([e, e]);
            a.cols.extend([self.from[e], self.to[e]]);
            a.vals.extend([1.0, -1.0]);
        }
        let mut ag = Coo { nrows: self.n_bus(), ncols: self.n_gen(), ..Default::default() };
        for g in 0..self.n_gen() {
            ag.rows.push(self.gen_bus[g]);
            ag.cols.push(g);
            ag.vals.push(1.0);
        }
        (a, ag)
    }

    pub fn total_pd(&self) -> f64 {
        self.pd.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lossless_unit_reactance() {
        let y = branch_admittance(0.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        let got = [y.gff, y.bff, y.gft, y.bft, y.gtf, y.btf, y.gtt, y.btt];
        let want = [0.0, -1.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-15, "{got:?}");
        }
        assert_eq!((y.g, y.b), (0.0, -1.0));
    }

    #[test]
    fn lossy_line_with_charging() {
        // ys = 1/(0.01 + 0.1j) = (0.01 - 0.1j)/0.0101
        let y = branch_admittance(0.01, 0.1, 0.02, 1.0, 0.0).unwrap();
        let (g, b) = (0.01 / 0.0101, -0.1 / 0.0101);
        assert_relative_eq!(y.gff, g, max_relative = 1e-14);
        assert_relative_eq!(y.bff, b + 0.01, max_relative = 1e-14);
        assert_relative_eq!(y.gft, -g, max_relative = 1e-14);
        assert_relative_eq!(y.bft, -b, max_relative = 1e-14);
        assert_relative_eq!(y.gff, 0.990_099_009_900_990_1, max_relative = 1e-12);
        assert_relative_eq!(y.bff, -9.890_990_099_009_901, max_relative = 1e-12);
        assert_relative_eq!(y.bft, 9.900_990_099_009_901, max_relative = 1e-12);
    }

    #[test]
    fn tap_scaling() {
        let a = branch_admittance(0.02, 0.2, 0.1, 1.0, 0.1).unwrap();
        let b = branch_admittance(0.02, 0.2, 0.1, 2.0, 0.1).unwrap();
        assert_relative_eq!(b.gff, a.gff / 4.0, max_relative = 1e-14);
        assert_relative_eq!(b.bff, a.bff / 4.0, max_relative = 1e-14);
        for (x, y) in [(b.gft, a.gft), (b.bft, a.bft), (b.gtf, a.gtf), (b.btf, a.btf)] {
            assert_relative_eq!(x, y / 2.0, max_relative = 1e-13);
        }
        assert_eq!((b.gtt, b.btt), (a.gtt, a.btt));
    }

    #[test]
    fn zero_impedance_rejected() {
        assert!(branch_admittance(0.0, 0.0, 0.1, 1.0, 0.0).is_err());
        assert!(branch_admittance(0.1, 0.1, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn phase_shift_breaks_symmetry_only_in_the_transfer_terms() {
        let y = branch_admittance(0.01, 0.1, 0.0, 1.0, 0.2).unwrap();
        let y0 = branch_admittance(0.01, 0.1, 0.0, 1.0, 0.0).unwrap();
        assert_eq!((y.gff, y.bff), (y0.gff, y0.bff));
        assert!((y.gft - y.gtf).abs() > 1e-3);
        let m = |g: f64, b: f64| (g * g + b * b).sqrt();
        assert_relative_eq!(m(y.gft, y.bft), m(y0.gft, y0.bft), max_relative = 1e-14);
    }
}

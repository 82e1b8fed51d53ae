//! Cone algebra for the conic interior-point method.
//!
//! Supported blocks are the zero cone (equality rows), the nonnegative
//! orthant and the second-order cone `{(t, x) : t >= ||x||}`. Rotated cones
//! are mapped to ordinary ones before they reach this module.

/// A block of rows in the cone product, as seen by callers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    /// Rows that must be exactly zero; their duals are free.
    Zero(usize),
    Nonneg(usize),
    /// `(t, x) : t >= ||x||`, dimension includes `t`.
    Soc(usize),
    /// `(a, b, u..) : 2ab >= ||u||², a, b >= 0`.
    RotatedSoc(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(d) | Cone::Nonneg(d) | Cone::Soc(d) | Cone::RotatedSoc(d) => d,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Block {
    Zero { off: usize, dim: usize },
    Nonneg { off: usize, dim: usize, w: Vec<f64> },
    Soc { off: usize, dim: usize, eta: f64, wbar: Vec<f64> },
}

/// Internal cone product with Nesterov–Todd scaling state.
#[derive(Debug, Clone)]
pub(crate) struct ConeSet {
    pub blocks: Vec<Block>,
    pub m: usize,
    pub degree: usize,
}

fn soc_det(v: &[f64]) -> f64 {
    let t = v[0];
    let x2: f64 = v[1..].iter().map(|x| x * x).sum();
    (t - x2.sqrt()) * (t + x2.sqrt())
}

impl ConeSet {
    /// Builds the internal product; rotated cones must already be converted.
    pub fn new(cones: &[Cone]) -> Self {
        let mut blocks = Vec::new();
        let mut off = 0;
        let mut degree = 0;
        for c in cones {
            let dim = c.dim();
            match c {
                Cone::Zero(_) => blocks.push(Block::Zero { off, dim }),
                Cone::Nonneg(_) => {
                    degree += dim;
                    blocks.push(Block::Nonneg { off, dim, w: vec![1.0; dim] })
                }
                Cone::Soc(_) | Cone::RotatedSoc(_) => {
                    assert!(dim >= 2, "second-order cone needs dimension >= 2");
                    degree += 1;
                    let mut wbar = vec![0.0; dim];
                    wbar[0] = 1.0;
                    blocks.push(Block::Soc { off, dim, eta: 1.0, wbar })
                }
            }
            off += dim;
        }
        ConeSet { blocks, m: off, degree }
    }

    /// Mask of rows that belong to the zero cone.
    pub fn zero_rows(&self) -> Vec<bool> {
        let mut mask = vec![false; self.m];
        for b in &self.blocks {
            if let Block::Zero { off, dim } = b {
                mask[*off..off + dim].iter_mut().for_each(|v| *v = true);
            }
        }
        mask
    }

    /// Largest alpha such that v + alpha * e lies in the boundary; negative
    /// when v is strictly interior (zero rows ignored).
    pub fn margin(&self, v: &[f64]) -> f64 {
        let mut m = f64::INFINITY;
        for b in &self.blocks {
            match b {
                Block::Zero { .. } => {}
                Block::Nonneg { off, dim, .. } => {
                    for x in &v[*off..off + dim] {
                        m = m.min(*x);
                    }
                }
                Block::Soc { off, dim, .. } => {
                    let s = &v[*off..off + dim];
                    let nx: f64 = s[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
                    m = m.min(s[0] - nx);
                }
            }
        }
        m
    }

    /// Adds a multiple of the identity so that `v` is comfortably interior.
    pub fn shift_to_interior(&self, v: &mut [f64]) {
        let alpha = -self.margin(v);
        if alpha.is_finite() && alpha >= 0.0 {
            self.add_identity(v, 1.0 + alpha);
        }
    }

    pub fn add_identity(&self, v: &mut [f64], a: f64) {
        for b in &self.blocks {
            match b {
                Block::Zero { .. } => {}
                Block::Nonneg { off, dim, .. } => v[*off..off + dim].iter_mut().for_each(|x| *x += a),
                Block::Soc { off, .. } => v[*off] += a,
            }
        }
    }

    /// Computes Nesterov–Todd scaling at (s, z); returns false if either
    /// point left the interior.
    pub fn update_scaling(&mut self, s: &[f64], z: &[f64]) -> bool {
        for b in &mut self.blocks {
            match b {
                Block::Zero { .. } => {}
                Block::Nonneg { off, dim, w } => {
                    for i in 0..*dim {
                        let (si, zi) = (s[*off + i], z[*off + i]);
                        if !(si > 0.0 && zi > 0.0) {
                            return false;
                        }
                        w[i] = (si / zi).sqrt();
                    }
                }
                Block::Soc { off, dim, eta, wbar } => {
                    let sb = &s[*off..*off + *dim];
                    let zb = &z[*off..*off + *dim];
                    let ds = soc_det(sb);
                    let dz = soc_det(zb);
                    if !(ds > 0.0 && dz > 0.0 && sb[0] > 0.0 && zb[0] > 0.0) {
                        return false;
                    }
                    let (rs, rz) = (ds.sqrt(), dz.sqrt());
                    let dot: f64 = sb.iter().zip(zb).map(|(a, c)| a * c).sum::<f64>() / (rs * rz);
                    let gamma = ((1.0 + dot) / 2.0).sqrt();
                    wbar[0] = (sb[0] / rs + zb[0] / rz) / (2.0 * gamma);
                    for i in 1..*dim {
                        wbar[i] = (sb[i] / rs - zb[i] / rz) / (2.0 * gamma);
                    }
                    // renormalize so that wbar0² − ||wbar1||² = 1 exactly
                    let w1: f64 = wbar[1..].iter().map(|x| x * x).sum();
                    wbar[0] = (1.0 + w1).sqrt();
                    *eta = (ds / dz).sqrt().sqrt();
                }
            }
        }
        true
    }

    /// out = W v
    pub fn apply_w(&self, v: &[f64], out: &mut [f64]) {
        self.apply(v, out, false)
    }

    /// out = W⁻¹ v
    pub fn apply_winv(&self, v: &[f64], out: &mut [f64]) {
        self.apply(v, out, true)
    }

    fn apply(&self, v: &[f64], out: &mut [f64], inverse: bool) {
        for b in &self.blocks {
            match b {
                Block::Zero { off, dim } => out[*off..off + dim].iter_mut().for_each(|x| *x = 0.0),
                Block::Nonneg { off, dim, w } => {
                    for i in 0..*dim {
                        out[off + i] = if inverse { v[off + i] / w[i] } else { v[off + i] * w[i] };
                    }
                }
                Block::Soc { off, dim, eta, wbar } => {
                    let vb = &v[*off..off + dim];
                    let w0 = wbar[0];
                    let w1v1: f64 = (1..*dim).map(|i| wbar[i] * vb[i]).sum();
                    let sgn = if inverse { -1.0 } else { 1.0 };
                    let scale = if inverse { 1.0 / eta } else { *eta };
                    out[*off] = scale * (w0 * vb[0] + sgn * w1v1);
                    let coef = sgn * vb[0] + w1v1 / (1.0 + w0);
                    for i in 1..*dim {
                        out[off + i] = scale * (vb[i] + coef * wbar[i]);
                    }
                }
            }
        }
    }

    /// Number of auxiliary KKT rows used by the sparse expansion of W².
    pub fn n_expansion(&self) -> usize {
        2 * self.blocks.iter().filter(|b| matches!(b, Block::Soc { .. })).count()
    }

    /// Upper-triangle pattern of the expanded `−W²` block.
    ///
    /// Indices below `m` are cone rows; each second-order block `k` adds a
    /// positive row `m + 2k` and a negative row `m + 2k + 1`, so that
    /// `W² = η²(D + uuᵀ − vvᵀ)` with diagonal `D` is represented by
    ///
    /// ```text
    ///     [ −η²D   ηu   ηv ]
    ///     [  ηuᵀ   1     0 ]
    ///     [  ηvᵀ   0    −1 ]
    /// ```
    ///
    /// which stays quasi-definite because `vᵀD⁻¹v < 1`.
    pub fn expanded_pattern(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut k = self.m;
        for b in &self.blocks {
            match b {
                Block::Zero { off, dim } | Block::Nonneg { off, dim, .. } => {
                    out.extend((0..*dim).map(|i| (off + i, off + i)));
                }
                Block::Soc { off, dim, .. } => {
                    out.extend((0..*dim).map(|i| (off + i, off + i)));
                    out.extend((0..*dim).map(|i| (off + i, k)));
                    out.extend((1..*dim).map(|i| (off + i, k + 1)));
                    out.push((k, k));
                    out.push((k + 1, k + 1));
                    k += 2;
                }
            }
        }
        out
    }

    /// Values for [`ConeSet::expanded_pattern`].
    pub fn expanded_values(&self, out: &mut Vec<f64>) {
        out.clear();
        for b in &self.blocks {
            match b {
                Block::Zero { dim, .. } => out.extend(std::iter::repeat(0.0).take(*dim)),
                Block::Nonneg { w, .. } => out.extend(w.iter().map(|x| -x * x)),
                Block::Soc { dim, eta, wbar, .. } => {
                    let n1: f64 = wbar[1..].iter().map(|x| x * x).sum();
                    // t = vᵀD⁻¹v sits halfway between its lower limit and 1
                    let t = (4.0 * n1 + 1.0) / (2.0 * (1.0 + 2.0 * n1));
                    let s = 2.0 * n1 + t;
                    let d1 = 0.5 / s;
                    let u0 = 2.0 * wbar[0] * (n1 / s).sqrt();
                    let (u1, v1) = if n1 > 0.0 { ((s / n1).sqrt(), (t / n1).sqrt()) } else { (0.0, 0.0) };
                    let e2 = eta * eta;
                    out.push(-e2 * d1);
                    out.extend(std::iter::repeat(-e2).take(dim - 1));
                    out.push(eta * u0);
                    out.extend(wbar[1..].iter().map(|w| eta * u1 * w));
                    out.extend(wbar[1..].iter().map(|w| eta * v1 * w));
                    out.push(1.0);
                    out.push(-1.0);
                }
            }
        }
    }

    /// Jordan product u ∘ v.
    pub fn circ(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        for b in &self.blocks {
            match b {
                Block::Zero { off, dim } => out[*off..off + dim].iter_mut().for_each(|x| *x = 0.0),
                Block::Nonneg { off, dim, .. } => {
                    for i in *off..off + dim {
                        out[i] = u[i] * v[i];
                    }
                }
                Block::Soc { off, dim, .. } => {
                    let (u0, v0) = (u[*off], v[*off]);
                    out[*off] = (0..*dim).map(|i| u[off + i] * v[off + i]).sum();
                    for i in 1..*dim {
                        out[off + i] = u0 * v[off + i] + v0 * u[off + i];
                    }
                }
            }
        }
    }

    /// Solves λ ∘ x = v for x.
    pub fn inv_circ(&self, lambda: &[f64], v: &[f64], out: &mut [f64]) {
        for b in &self.blocks {
            match b {
                Block::Zero { off, dim } => out[*off..off + dim].iter_mut().for_each(|x| *x = 0.0),
                Block::Nonneg { off, dim, .. } => {
                    for i in *off..off + dim {
                        out[i] = v[i] / lambda[i];
                    }
                }
                Block::Soc { off, dim, .. } => {
                    let l = &lambda[*off..off + dim];
                    let vb = &v[*off..off + dim];
                    let det = soc_det(l);
                    let l1v1: f64 = (1..*dim).map(|i| l[i] * vb[i]).sum();
                    let x0 = (l[0] * vb[0] - l1v1) / det;
                    out[*off] = x0;
                    for i in 1..*dim {
                        out[off + i] = (vb[i] - x0 * l[i]) / l[0];
                    }
                }
            }
        }
    }

    /// Largest step in (0, amax] keeping v + a·dv inside the cone.
    pub fn max_step(&self, v: &[f64], dv: &[f64], amax: f64) -> f64 {
        let mut a = amax;
        for b in &self.blocks {
            match b {
                Block::Zero { .. } => {}
                Block::Nonneg { off, dim, .. } => {
                    for i in *off..off + dim {
                        if dv[i] < 0.0 {
                            a = a.min(-v[i] / dv[i]);
                        }
                    }
                }
                Block::Soc { off, dim, .. } => {
                    a = a.min(soc_step(&v[*off..off + dim], &dv[*off..off + dim]));
                }
            }
        }
        a.max(0.0)
    }
}

fn soc_step(x: &[f64], d: &[f64]) -> f64 {
    let mut a = f64::INFINITY;
    if d[0] < 0.0 {
        a = -x[0] / d[0];
    }
    // det(x + t d) = qa t² + 2 qb t + qc
    let qa = soc_det(d);
    let qb = x[0] * d[0] - (1..x.len()).map(|i| x[i] * d[i]).sum::<f64>();
    let qc = soc_det(x).max(0.0);
    if qa == 0.0 {
        if qb < 0.0 {
            a = a.min(-qc / (2.0 * qb));
        }
        return a;
    }
    let disc = qb * qb - qa * qc;
    if disc < 0.0 {
        return a;
    }
    let q = -(qb + qb.signum() * disc.sqrt());
    for r in [q / qa, if q != 0.0 { qc / q } else { f64::INFINITY }] {
        if r > 0.0 {
            a = a.min(r);
        }
    }
    a
}

/// Maps a rotated cone block (a, b, u..) to an ordinary one
/// ((a+b)/√2, (a−b)/√2, u..). The map is symmetric and its own inverse.
pub fn rotate_in_place(v: &mut [f64]) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let (a, b) = (v[0], v[1]);
    v[0] = s * (a + b);
    v[1] = s * (a - b);
}

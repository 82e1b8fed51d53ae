//! Symmetric indefinite LDLᵀ factorization without pivoting.
//!
//! The fill-reducing ordering comes from AMD and is computed once per
//! sparsity pattern. Numeric factorization follows the up-looking scheme of
//! QDLDL. Small systems are factored densely with the same ordering and the
//! same pivot treatment, so both paths yield identical inertia.
//!
//! When a vector of expected pivot signs is supplied the factorization is
//! dynamically regularized: any pivot whose sign disagrees with the
//! expectation, or whose magnitude falls below `dynamic_eps`, is replaced by
//! `sign * dynamic_delta`. Without signs the pivots are left untouched and
//! the inertia is reported so that the caller can correct it.

use crate::sparse::CscMatrix;
use thiserror::Error;

const NONE: usize = usize::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LdlError {
    #[error("matrix is not square upper triangular")]
    NotUpperTriangular,
    #[error("ordering failed")]
    Ordering,
    #[error("non-finite pivot at column {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

#[derive(Debug, Clone)]
pub struct LdlSettings {
    pub dynamic_eps: f64,
    pub dynamic_delta: f64,
    /// Systems with fewer rows than this are factored densely.
    pub dense_threshold: usize,
}

impl Default for LdlSettings {
    fn default() -> Self {
        LdlSettings { dynamic_eps: 1e-13, dynamic_delta: 2e-7, dense_threshold: 500 }
    }
}

#[derive(Debug, Clone)]
enum Backend {
    Sparse {
        etree: Vec<usize>,
        lp: Vec<usize>,
        li: Vec<usize>,
        lx: Vec<f64>,
    },
    // column-major strict lower triangle of L
    Dense {
        l: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    // permuted upper triangle and the map from caller nz positions into it
    pu: CscMatrix,
    map: Vec<usize>,
    signs: Option<Vec<f64>>,
    settings: LdlSettings,
    backend: Backend,
    d: Vec<f64>,
    dinv: Vec<f64>,
    /// Number of pivots altered by dynamic regularization in the last factorization.
    pub bumped: usize,
}

impl LdlFactor {
    /// Symbolic analysis of the pattern of `upper` (upper triangle, diagonal
    /// entries should be structurally present).
    pub fn new(upper: &CscMatrix, signs: Option<&[f64]>, settings: LdlSettings) -> Result<Self, LdlError> {
        let n = upper.ncols;
        if upper.nrows != n {
            return Err(LdlError::NotUpperTriangular);
        }
        for j in 0..n {
            for p in upper.colptr[j]..upper.colptr[j + 1] {
                if upper.rowval[p] > j {
                    return Err(LdlError::NotUpperTriangular);
                }
            }
        }
        let (perm, iperm) = if n == 0 {
            (Vec::new(), Vec::new())
        } else {
            let ap: Vec<isize> = upper.colptr.iter().map(|&v| v as isize).collect();
            let ai: Vec<isize> = upper.rowval.iter().map(|&v| v as isize).collect();
            let (p, pinv, _) =
                amd::order(n as isize, &ap, &ai, &amd::Control::default()).map_err(|_| LdlError::Ordering)?;
            (p.iter().map(|&v| v as usize).collect::<Vec<_>>(), pinv.iter().map(|&v| v as usize).collect::<Vec<_>>())
        };

        // permute: entry (i, j) goes to (min, max) of (iperm[i], iperm[j])
        let nnz = upper.nnz();
        let (mut ri, mut ci) = (Vec::with_capacity(nnz), Vec::with_capacity(nnz));
        for j in 0..n {
            for p in upper.colptr[j]..upper.colptr[j + 1] {
                let (a, b) = (iperm[upper.rowval[p]], iperm[j]);
                ri.push(a.min(b));
                ci.push(a.max(b));
            }
        }
        let pu = CscMatrix::from_triplets(n, n, &ri, &ci, &vec![0.0; nnz]);
        let map: Vec<usize> = (0..nnz).map(|k| pu.find(ri[k], ci[k]).unwrap()).collect();

        let backend = if n < settings.dense_threshold {
            Backend::Dense { l: vec![0.0; n * n] }
        } else {
            let (etree, lnz) = etree(&pu);
            let mut lp = vec![0usize; n + 1];
            for i in 0..n {
                lp[i + 1] = lp[i] + lnz[i];
            }
            let total = lp[n];
            Backend::Sparse { etree, lp, li: vec![0; total], lx: vec![0.0; total] }
        };
        let signs = signs.map(|s| {
            assert_eq!(s.len(), n);
            (0..n).map(|k| s[perm[k]]).collect()
        });
        Ok(LdlFactor { n, perm, iperm, pu, map, signs, settings, backend, d: vec![0.0; n], dinv: vec![0.0; n], bumped: 0 })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.backend, Backend::Dense { .. })
    }

    /// Numeric factorization. `values` are aligned with the `nzval` of the
    /// matrix passed to [`LdlFactor::new`].
    pub fn factor(&mut self, values: &[f64]) -> Result<Inertia, LdlError> {
        self.factor_impl(values, false)
    }

    /// Numeric factorization honouring the pivot signs given at construction.
    pub fn factor_regularized(&mut self, values: &[f64]) -> Result<Inertia, LdlError> {
        self.factor_impl(values, true)
    }

    fn factor_impl(&mut self, values: &[f64], regularize: bool) -> Result<Inertia, LdlError> {
        assert_eq!(values.len(), self.map.len());
        self.pu.nzval.iter_mut().for_each(|v| *v = 0.0);
        for (k, &v) in values.iter().enumerate() {
            self.pu.nzval[self.map[k]] += v;
        }
        let mut policy = PivotPolicy {
            signs: if regularize { self.signs.as_deref() } else { None },
            eps: self.settings.dynamic_eps,
            delta: self.settings.dynamic_delta,
            bumped: 0,
        };
        match &mut self.backend {
            Backend::Sparse { etree, lp, li, lx } => {
                sparse_factor(&self.pu, etree, lp, li, lx, &mut self.d, &mut policy)?;
            }
            Backend::Dense { l } => {
                dense_factor_into(&self.pu, l, &mut self.d, &mut policy);
            }
        }
        self.bumped = policy.bumped;
        let mut inertia = Inertia::default();
        for k in 0..self.n {
            let d = self.d[k];
            if !d.is_finite() {
                return Err(LdlError::NonFinite(k));
            }
            if d > 0.0 {
                inertia.positive += 1;
            } else if d < 0.0 {
                inertia.negative += 1;
            } else {
                inertia.zero += 1;
            }
            self.dinv[k] = if d == 0.0 { 0.0 } else { 1.0 / d };
        }
        Ok(inertia)
    }

    /// Solves K x = b in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = (0..n).map(|k| b[self.perm[k]]).collect();
        match &self.backend {
            Backend::Sparse { lp, li, lx, .. } => {
                for i in 0..n {
                    let xi = x[i];
                    if xi != 0.0 {
                        for p in lp[i]..lp[i + 1] {
                            x[li[p]] -= lx[p] * xi;
                        }
                    }
                }
                for i in 0..n {
                    x[i] *= self.dinv[i];
                }
                for i in (0..n).rev() {
                    let mut acc = x[i];
                    for p in lp[i]..lp[i + 1] {
                        acc -= lx[p] * x[li[p]];
                    }
                    x[i] = acc;
                }
            }
            Backend::Dense { l } => {
                for j in 0..n {
                    let xj = x[j];
                    if xj != 0.0 {
                        let col = &l[j * n..(j + 1) * n];
                        for i in j + 1..n {
                            x[i] -= col[i] * xj;
                        }
                    }
                }
                for i in 0..n {
                    x[i] *= self.dinv[i];
                }
                for j in (0..n).rev() {
                    let col = &l[j * n..(j + 1) * n];
                    let mut acc = x[j];
                    for i in j + 1..n {
                        acc -= col[i] * x[i];
                    }
                    x[j] = acc;
                }
            }
        }
        for k in 0..n {
            b[self.perm[k]] = x[k];
        }
    }

    /// Solves with iterative refinement against `upper`, the exact (e.g.
    /// unregularized) matrix. Returns the final residual infinity norm.
    pub fn solve_refined(&self, upper: &CscMatrix, b: &[f64], x: &mut [f64], max_steps: usize, reltol: f64) -> f64 {
        x.copy_from_slice(b);
        self.solve(x);
        let bnorm = crate::sparse::norm_inf(b);
        let mut r = vec![0.0; self.n];
        let mut res = f64::INFINITY;
        for _ in 0..=max_steps {
            r.copy_from_slice(b);
            upper.sym_upper_gemv(-1.0, x, &mut r);
            let rn = crate::sparse::norm_inf(&r);
            if !(rn < res) {
                // stalled or diverging; keep the current iterate
                break;
            }
            res = rn;
            if rn <= reltol * (1.0 + bnorm) {
                break;
            }
            self.solve(&mut r);
            let prev: Vec<f64> = x.to_vec();
            for i in 0..self.n {
                x[i] += r[i];
            }
            // reject a refinement step that makes things worse
            let mut chk = b.to_vec();
            upper.sym_upper_gemv(-1.0, x, &mut chk);
            if crate::sparse::norm_inf(&chk) > rn {
                x.copy_from_slice(&prev);
                break;
            }
        }
        res
    }

    /// Pivots of the most recent factorization, in permuted order.
    pub fn pivots(&self) -> &[f64] {
        &self.d
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn inverse_permutation(&self) -> &[usize] {
        &self.iperm
    }
}

fn etree(pu: &CscMatrix) -> (Vec<usize>, Vec<usize>) {
    let n = pu.ncols;
    let mut work = vec![NONE; n];
    let mut lnz = vec![0usize; n];
    let mut etree = vec![NONE; n];
    for j in 0..n {
        work[j] = j;
        for p in pu.colptr[j]..pu.colptr[j + 1] {
            let mut i = pu.rowval[p];
            while work[i] != j {
                if etree[i] == NONE {
                    etree[i] = j;
                }
                lnz[i] += 1;
                work[i] = j;
                i = etree[i];
            }
        }
    }
    (etree, lnz)
}

struct PivotPolicy<'a> {
    signs: Option<&'a [f64]>,
    eps: f64,
    delta: f64,
    bumped: usize,
}

impl PivotPolicy<'_> {
    fn fix(&mut self, k: usize, d: f64) -> f64 {
        match self.signs {
            Some(s) if s[k] * d <= self.eps => {
                self.bumped += 1;
                s[k] * self.delta
            }
            _ => d,
        }
    }
}

fn sparse_factor(
    pu: &CscMatrix,
    etree: &[usize],
    lp: &[usize],
    li: &mut [usize],
    lx: &mut [f64],
    d: &mut [f64],
    policy: &mut PivotPolicy,
) -> Result<(), LdlError> {
    let n = pu.ncols;
    let mut y_markers = vec![false; n];
    let mut y_vals = vec![0.0; n];
    let mut y_idx = vec![0usize; n];
    let mut elim = vec![0usize; n];
    let mut next_space: Vec<usize> = lp[..n].to_vec();
    let mut dinv = vec![0.0; n];
    for k in 0..n {
        let mut nnz_y = 0;
        d[k] = 0.0;
        for p in pu.colptr[k]..pu.colptr[k + 1] {
            let bidx = pu.rowval[p];
            if bidx == k {
                d[k] = pu.nzval[p];
                continue;
            }
            y_vals[bidx] = pu.nzval[p];
            let mut next = bidx;
            if !y_markers[next] {
                y_markers[next] = true;
                elim[0] = next;
                let mut nnz_e = 1;
                next = etree[bidx];
                while next != NONE && next < k {
                    if y_markers[next] {
                        break;
                    }
                    y_markers[next] = true;
                    elim[nnz_e] = next;
                    nnz_e += 1;
                    next = etree[next];
                }
                while nnz_e > 0 {
                    nnz_e -= 1;
                    y_idx[nnz_y] = elim[nnz_e];
                    nnz_y += 1;
                }
            }
        }
        for i in (0..nnz_y).rev() {
            let c = y_idx[i];
            let t = next_space[c];
            let yc = y_vals[c];
            for j in lp[c]..t {
                y_vals[li[j]] -= lx[j] * yc;
            }
            li[t] = k;
            lx[t] = yc * dinv[c];
            d[k] -= yc * lx[t];
            next_space[c] += 1;
            y_vals[c] = 0.0;
            y_markers[c] = false;
        }
        d[k] = policy.fix(k, d[k]);
        if !d[k].is_finite() {
            return Err(LdlError::NonFinite(k));
        }
        dinv[k] = if d[k] == 0.0 { 0.0 } else { 1.0 / d[k] };
    }
    Ok(())
}

fn dense_factor_into(pu: &CscMatrix, l: &mut [f64], d: &mut [f64], policy: &mut PivotPolicy) {
    let n = pu.ncols;
    l.iter_mut().for_each(|v| *v = 0.0);
    // fill the lower triangle (column-major) from the upper CSC
    for j in 0..n {
        for p in pu.colptr[j]..pu.colptr[j + 1] {
            let i = pu.rowval[p];
            l[i * n + j] += pu.nzval[p];
        }
    }
    for j in 0..n {
        let dj = policy.fix(j, l[j * n + j]);
        d[j] = dj;
        let inv = if dj == 0.0 { 0.0 } else { 1.0 / dj };
        // column j below the diagonal becomes L[:, j]
        for i in j + 1..n {
            l[j * n + i] *= inv;
        }
        for k in j + 1..n {
            let lkj = l[j * n + k];
            if lkj == 0.0 {
                continue;
            }
            let f = lkj * dj;
            let (left, right) = l.split_at_mut(k * n);
            let colj = &left[j * n..(j + 1) * n];
            let colk = &mut right[..n];
            for i in k..n {
                colk[i] -= colj[i] * f;
            }
        }
        l[j * n + j] = 0.0;
    }
}

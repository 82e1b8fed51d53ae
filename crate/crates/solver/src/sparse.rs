//! Compressed sparse column storage.

/// A real matrix in compressed sparse column form.
///
/// Row indices within a column are sorted and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowval: Vec<usize>,
    pub nzval: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CscMatrix { nrows, ncols, colptr: vec![0; ncols + 1], rowval: Vec::new(), nzval: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        CscMatrix {
            nrows: n,
            ncols: n,
            colptr: (0..=n).collect(),
            rowval: (0..n).collect(),
            nzval: vec![1.0; n],
        }
    }

    /// Builds a matrix from coordinate triplets, summing duplicates.
    ///
    /// Explicit zeros are kept so the sparsity pattern is predictable.
    pub fn from_triplets(nrows: usize, ncols: usize, rows: &[usize], cols: &[usize], vals: &[f64]) -> Self {
        assert_eq!(rows.len(), cols.len());
        assert_eq!(rows.len(), vals.len());
        let mut count = vec![0usize; ncols + 1];
        for (&r, &c) in rows.iter().zip(cols) {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds {nrows}x{ncols}");
            count[c + 1] += 1;
        }
        for j in 0..ncols {
            count[j + 1] += count[j];
        }
        let mut next = count.clone();
        let mut ri = vec![0usize; rows.len()];
        let mut rv = vec![0.0; rows.len()];
        for k in 0..rows.len() {
            let c = cols[k];
            ri[next[c]] = rows[k];
            rv[next[c]] = vals[k];
            next[c] += 1;
        }
        // sort each column and merge duplicates
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowval = Vec::with_capacity(rows.len());
        let mut nzval = Vec::with_capacity(rows.len());
        let mut buf: Vec<(usize, f64)> = Vec::new();
        for j in 0..ncols {
            buf.clear();
            buf.extend((count[j]..count[j + 1]).map(|p| (ri[p], rv[p])));
            buf.sort_by_key(|e| e.0);
            let mut last = usize::MAX;
            for &(r, v) in &buf {
                if r == last {
                    *nzval.last_mut().unwrap() += v;
                } else {
                    rowval.push(r);
                    nzval.push(v);
                    last = r;
                }
            }
            colptr[j + 1] = rowval.len();
        }
        CscMatrix { nrows, ncols, colptr, rowval, nzval }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let (mut ri, mut ci, mut v) = (Vec::new(), Vec::new(), Vec::new());
        for (i, row) in rows.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                if x != 0.0 {
                    ri.push(i);
                    ci.push(j);
                    v.push(x);
                }
            }
        }
        Self::from_triplets(nrows, ncols, &ri, &ci, &v)
    }

    pub fn nnz(&self) -> usize {
        self.rowval.len()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                d[self.rowval[p]][j] += self.nzval[p];
            }
        }
        d
    }

    pub fn transpose(&self) -> CscMatrix {
        let mut count = vec![0usize; self.nrows + 1];
        for &r in &self.rowval {
            count[r + 1] += 1;
        }
        for i in 0..self.nrows {
            count[i + 1] += count[i];
        }
        let mut next = count.clone();
        let mut rowval = vec![0; self.nnz()];
        let mut nzval = vec![0.0; self.nnz()];
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let r = self.rowval[p];
                rowval[next[r]] = j;
                nzval[next[r]] = self.nzval[p];
                next[r] += 1;
            }
        }
        CscMatrix { nrows: self.ncols, ncols: self.nrows, colptr: count, rowval, nzval }
    }

    /// y += alpha * A x
    pub fn gemv(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for j in 0..self.ncols {
            let xj = alpha * x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.colptr[j]..self.colptr[j + 1] {
                y[self.rowval[p]] += self.nzval[p] * xj;
            }
        }
    }

    /// y += alpha * Aᵀ x
    pub fn gemv_t(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for j in 0..self.ncols {
            let mut acc = 0.0;
            for p in self.colptr[j]..self.colptr[j + 1] {
                acc += self.nzval[p] * x[self.rowval[p]];
            }
            y[j] += alpha * acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.gemv(1.0, x, &mut y);
        y
    }

    pub fn tmul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.gemv_t(1.0, x, &mut y);
        y
    }

    /// y += alpha * S x where `self` holds the upper triangle of a symmetric S.
    pub fn sym_upper_gemv(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let i = self.rowval[p];
                let v = alpha * self.nzval[p];
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
    }

    /// Scales rows by `r` and columns by `c` in place: A <- diag(r) A diag(c).
    pub fn scale(&mut self, r: &[f64], c: &[f64]) {
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                self.nzval[p] *= r[self.rowval[p]] * c[j];
            }
        }
    }

    /// Infinity norm of every column.
    pub fn col_norms_inf(&self) -> Vec<f64> {
        (0..self.ncols)
            .map(|j| self.nzval[self.colptr[j]..self.colptr[j + 1]].iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .collect()
    }

    /// Infinity norm of every row.
    pub fn row_norms_inf(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.nrows];
        for (p, &r) in self.rowval.iter().enumerate() {
            out[r] = out[r].max(self.nzval[p].abs());
        }
        out
    }

    /// Position of entry (i, j) in `nzval`, if structurally present.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let range = self.colptr[j]..self.colptr[j + 1];
        self.rowval[range.clone()].binary_search(&i).ok().map(|k| range.start + k)
    }

    /// Sub-matrix made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> CscMatrix {
        let mut newpos = vec![usize::MAX; self.nrows];
        for (k, &r) in rows.iter().enumerate() {
            newpos[r] = k;
        }
        let (mut ri, mut ci, mut v) = (Vec::new(), Vec::new(), Vec::new());
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let k = newpos[self.rowval[p]];
                if k != usize::MAX {
                    ri.push(k);
                    ci.push(j);
                    v.push(self.nzval[p]);
                }
            }
        }
        CscMatrix::from_triplets(rows.len(), self.ncols, &ri, &ci, &v)
    }
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

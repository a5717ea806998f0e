//! Compressed sparse row matrices and the handful of kernels the solver needs.

use std::ops::Range;

/// Coordinate-format builder. Duplicate entries are summed on conversion.
#[derive(Clone, Debug, Default)]
pub struct Triplets {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Converts to CSR, summing duplicates. Explicit zeros are kept so the
    /// sparsity pattern reflects structure rather than values.
    pub fn to_csr(&self) -> Csr {
        let mut counts = vec![0usize; self.nrows + 1];
        for &(r, _, _) in &self.entries {
            counts[r + 1] += 1;
        }
        for i in 0..self.nrows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; self.entries.len()];
        let mut vals = vec![0.0; self.entries.len()];
        let mut next = counts.clone();
        for &(r, c, v) in &self.entries {
            let k = next[r];
            cols[k] = c;
            vals[k] = v;
            next[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut out_cols = Vec::with_capacity(cols.len());
        let mut out_vals = Vec::with_capacity(vals.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..self.nrows {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_by_key(|&(c, _)| c);
            let mut it = scratch.iter().peekable();
            while let Some(&(c, mut v)) = it.next() {
                while let Some(&&(c2, v2)) = it.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    it.next();
                }
                out_cols.push(c);
                out_vals.push(v);
            }
            row_ptr.push(out_cols.len());
        }
        Csr {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            cols: out_cols,
            vals: out_vals,
        }
    }
}

/// Row-major compressed sparse matrix with sorted column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            cols: (0..n).collect(),
            vals: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    #[inline]
    pub fn row_range(&self, row: usize) -> Range<usize> {
        self.row_ptr[row]..self.row_ptr[row + 1]
    }

    /// Column indices and values of one row.
    #[inline]
    pub fn row(&self, row: usize) -> (&[usize], &[f64]) {
        let r = self.row_range(row);
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (cols, vals) = self.row(row);
        match cols.binary_search(&col) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            self.row_range(r)
                .map(move |k| (r, self.cols[k], self.vals[k]))
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_range(r) {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yr = acc;
        }
    }

    pub fn transpose(&self) -> Csr {
        let mut t = Triplets::with_capacity(self.ncols, self.nrows, self.nnz());
        for (r, c, v) in self.iter() {
            t.push(c, r, v);
        }
        t.to_csr()
    }

    /// Sparse product `self * rhs`.
    pub fn matmul(&self, rhs: &Csr) -> Csr {
        assert_eq!(self.ncols, rhs.nrows);
        let mut t = Triplets::new(self.nrows, rhs.ncols);
        for r in 0..self.nrows {
            for k in self.row_range(r) {
                let a = self.vals[k];
                let (rc, rv) = rhs.row(self.cols[k]);
                for (&c, &v) in rc.iter().zip(rv) {
                    t.push(r, c, a * v);
                }
            }
        }
        t.to_csr()
    }

    /// Extracts the submatrix on the given (ordered) rows and columns.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Csr {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (j, &c) in cols.iter().enumerate() {
            col_map[c] = j;
        }
        let mut t = Triplets::new(rows.len(), cols.len());
        for (i, &r) in rows.iter().enumerate() {
            for k in self.row_range(r) {
                let j = col_map[self.cols[k]];
                if j != usize::MAX {
                    t.push(i, j, self.vals[k]);
                }
            }
        }
        t.to_csr()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.iter() {
            d[r][c] += v;
        }
        d
    }

    pub fn scale_rows(&mut self, factors: &[f64]) {
        assert_eq!(factors.len(), self.nrows);
        for (r, &f) in factors.iter().enumerate() {
            let range = self.row_range(r);
            for v in &mut self.vals[range] {
                *v *= f;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.vals.iter().all(|v| v.is_finite())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

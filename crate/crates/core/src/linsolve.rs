//! Linear solvers for the reduced Newton systems.
//!
//! Systems are ordered with the pressure-like unknowns first and the
//! saturations last. Two paths are available: a sparse LU factorization
//! (backed by `faer`) and restarted GMRES right-preconditioned by a
//! two-stage CPR preconditioner (exact pressure-block solve followed by an
//! ILU(0) sweep on the full system). Rows are equilibrated by their largest
//! entry before either path runs.

use faer::sparse::{SparseColMat, Triplet};
use faer::prelude::*;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, norm2, Csr};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearKind {
    Direct,
    Cpr,
}

impl std::str::FromStr for LinearKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Self::Direct),
            "cpr" => Ok(Self::Cpr),
            other => Err(Error::Config(format!("unknown linear solver `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearConfig {
    pub kind: LinearKind,
    pub rtol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            kind: LinearKind::Cpr,
            rtol: 1e-8,
            max_iter: 300,
            restart: 30,
        }
    }
}

/// Square system whose first `n_pressure` unknowns form the pressure-like block.
#[derive(Clone, Copy, Debug)]
pub struct BlockSystem<'a> {
    pub matrix: &'a Csr,
    pub rhs: &'a [f64],
    pub n_pressure: usize,
}

/// Relative residual a direct solution must reach to be accepted.
const DIRECT_ACCEPT: f64 = 1e-6;

/// Solves the system; returns the solution and the number of linear
/// iterations (1 for the direct path).
pub fn solve(sys: &BlockSystem<'_>, cfg: &LinearConfig) -> Result<(Vec<f64>, usize)> {
    let n = sys.matrix.nrows();
    if sys.matrix.ncols() != n || sys.rhs.len() != n || sys.n_pressure > n {
        return Err(Error::Dimension("inconsistent linear system".into()));
    }
    if !(cfg.rtol > 0.0 && cfg.rtol < 1.0) {
        return Err(Error::Config("linear rtol must lie in (0, 1)".into()));
    }
    if !sys.matrix.is_finite() || sys.rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::LinearSolver("non-finite entries in the linear system".into()));
    }
    if n == 0 {
        return Ok((Vec::new(), 0));
    }
    let (a, b) = equilibrate(sys.matrix, sys.rhs);
    match cfg.kind {
        LinearKind::Direct => Ok((direct_solve(&a, &b)?, 1)),
        LinearKind::Cpr => {
            let pre = CprPreconditioner::new(&a, sys.n_pressure)?;
            gmres(&a, &b, &pre, cfg)
        }
    }
}

/// Scales each row by the inverse of its largest absolute entry.
fn equilibrate(a: &Csr, b: &[f64]) -> (Csr, Vec<f64>) {
    let scale: Vec<f64> = (0..a.nrows())
        .map(|r| {
            let m = a.row(r).1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if m > 0.0 {
                1.0 / m
            } else {
                1.0
            }
        })
        .collect();
    let mut s = a.clone();
    s.scale_rows(&scale);
    let rhs = b.iter().zip(&scale).map(|(v, f)| v * f).collect();
    (s, rhs)
}

/// Sparse LU factorization.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(a: &Csr) -> Result<Self> {
        let n = a.nrows();
        let trip: Vec<Triplet<usize, usize, f64>> =
            a.iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, a.ncols(), &trip)
            .map_err(|e| Error::LinearSolver(format!("matrix assembly: {e:?}")))?;
        let lu = m
            .sp_lu()
            .map_err(|e| Error::LinearSolver(format!("LU factorization: {e:?}")))?;
        Ok(Self { n, lu })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

/// Direct solve with a residual check that rejects singular or badly
/// conditioned factorizations.
pub fn direct_solve(a: &Csr, b: &[f64]) -> Result<Vec<f64>> {
    let x = SparseLu::new(a)?.solve(b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::LinearSolver("direct solve produced non-finite values".into()));
    }
    let mut r = a.matvec(&x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri -= bi;
    }
    let bn = norm2(b);
    let rel = norm2(&r) / if bn > 0.0 { bn } else { 1.0 };
    if !(rel <= DIRECT_ACCEPT) {
        return Err(Error::LinearSolver(format!(
            "direct solve residual {rel:.3e} indicates a singular system"
        )));
    }
    Ok(x)
}

/// Incomplete LU factorization without fill on the sparsity pattern of `A`.
pub struct Ilu0 {
    lu: Csr,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &Csr) -> Result<Self> {
        let n = a.nrows();
        let mut lu = a.clone();
        let mut diag = vec![usize::MAX; n];
        for (r, d) in diag.iter_mut().enumerate() {
            let range = lu.row_range(r);
            let (cols, _) = lu.row(r);
            if let Ok(k) = cols.binary_search(&r) {
                *d = range.start + k;
            }
        }
        if diag.iter().any(|&d| d == usize::MAX) {
            return Err(Error::LinearSolver("ILU(0) needs a full diagonal".into()));
        }
        let col_of: Vec<usize> = (0..n).flat_map(|r| lu.row(r).0.to_vec()).collect();
        let mut pos = vec![usize::MAX; n];
        let scale = lu.iter().fold(0.0f64, |m, (_, _, v)| m.max(v.abs()));
        let tiny = 1e-14 * scale.max(f64::MIN_POSITIVE);
        for i in 0..n {
            let range = lu.row_range(i);
            for k in range.clone() {
                pos[col_of[k]] = k;
            }
            for kk in range.clone() {
                let k = col_of[kk];
                if k >= i {
                    break;
                }
                let pivot = lu.values_mut()[diag[k]];
                let lik = lu.values_mut()[kk] / pivot;
                lu.values_mut()[kk] = lik;
                for jj in (diag[k] + 1)..lu.row_range(k).end {
                    let j = col_of[jj];
                    let p = pos[j];
                    if p != usize::MAX {
                        let ukj = lu.values_mut()[jj];
                        lu.values_mut()[p] -= lik * ukj;
                    }
                }
            }
            let d = &mut lu.values_mut()[diag[i]];
            if d.abs() < tiny {
                *d = if *d < 0.0 { -tiny } else { tiny };
            }
            for k in range {
                pos[col_of[k]] = usize::MAX;
            }
        }
        Ok(Self { lu, diag })
    }

    pub fn apply(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut y = b.to_vec();
        for i in 0..n {
            let (cols, vals) = self.lu.row(i);
            let start = self.lu.row_range(i).start;
            let mut acc = y[i];
            for (k, (&c, &v)) in cols.iter().zip(vals).enumerate() {
                if start + k >= self.diag[i] {
                    break;
                }
                acc -= v * y[c];
            }
            y[i] = acc;
        }
        for i in (0..n).rev() {
            let (cols, vals) = self.lu.row(i);
            let start = self.lu.row_range(i).start;
            let mut acc = y[i];
            let mut d = 1.0;
            for (k, (&c, &v)) in cols.iter().zip(vals).enumerate() {
                let idx = start + k;
                if idx == self.diag[i] {
                    d = v;
                } else if idx > self.diag[i] {
                    acc -= v * y[c];
                }
            }
            y[i] = acc / d;
        }
        y
    }
}

/// Two-stage CPR preconditioner: exact pressure-block solve, then ILU(0)
/// on the full system applied to the remaining residual.
pub struct CprPreconditioner<'a> {
    a: &'a Csr,
    np: usize,
    pressure: Option<SparseLu>,
    ilu: Ilu0,
}

impl<'a> CprPreconditioner<'a> {
    pub fn new(a: &'a Csr, n_pressure: usize) -> Result<Self> {
        let pressure = if n_pressure > 0 {
            let idx: Vec<usize> = (0..n_pressure).collect();
            Some(SparseLu::new(&a.submatrix(&idx, &idx))?)
        } else {
            None
        };
        Ok(Self {
            a,
            np: n_pressure,
            pressure,
            ilu: Ilu0::new(a)?,
        })
    }

    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut x1 = vec![0.0; r.len()];
        if let Some(lu) = &self.pressure {
            let xp = lu.solve(&r[..self.np]);
            x1[..self.np].copy_from_slice(&xp);
        }
        let ax1 = self.a.matvec(&x1);
        let r2: Vec<f64> = r.iter().zip(&ax1).map(|(a, b)| a - b).collect();
        let x2 = self.ilu.apply(&r2);
        x1.iter().zip(&x2).map(|(a, b)| a + b).collect()
    }
}

/// Restarted GMRES with right preconditioning.
fn gmres(
    a: &Csr,
    b: &[f64],
    pre: &CprPreconditioner<'_>,
    cfg: &LinearConfig,
) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let m = cfg.restart.max(1);
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let target = cfg.rtol * bnorm;
    let mut iters = 0;
    let mut prev_cycle_res = f64::INFINITY;
    loop {
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm2(&r);
        if beta <= target {
            return Ok((x, iters));
        }
        if iters >= cfg.max_iter {
            return Err(Error::LinearSolver(format!(
                "GMRES did not converge in {} iterations (relative residual {:.3e})",
                iters,
                beta / bnorm
            )));
        }
        if !(beta < prev_cycle_res * (1.0 - 1e-10)) {
            return Err(Error::LinearSolver(format!(
                "GMRES stagnated at relative residual {:.3e}",
                beta / bnorm
            )));
        }
        prev_cycle_res = beta;

        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        v.push(r.iter().map(|ri| ri / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for j in 0..m {
            let zj = pre.apply(&v[j]);
            let mut w = a.matvec(&zj);
            z.push(zj);
            for i in 0..=j {
                h[i][j] = dot(&w, &v[i]);
                axpy(-h[i][j], &v[i], &mut w);
            }
            // Second Gram-Schmidt pass for robustness.
            for i in 0..=j {
                let c = dot(&w, &v[i]);
                h[i][j] += c;
                axpy(-c, &v[i], &mut w);
            }
            let wn = norm2(&w);
            h[j + 1][j] = wn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let denom = h[j][j].hypot(h[j + 1][j]);
            if denom == 0.0 {
                k_used = j;
                break;
            }
            cs[j] = h[j][j] / denom;
            sn[j] = h[j + 1][j] / denom;
            h[j][j] = denom;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            iters += 1;
            k_used = j + 1;
            if g[j + 1].abs() <= target || iters >= cfg.max_iter || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wi| wi / wn).collect());
        }
        if k_used == 0 {
            return Err(Error::LinearSolver("GMRES breakdown".into()));
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for (l, yl) in y.iter().enumerate().skip(i + 1) {
                acc -= h[i][l] * yl;
            }
            y[i] = acc / h[i][i];
        }
        for (yi, zi) in y.iter().zip(&z) {
            axpy(*yi, zi, &mut x);
        }
    }
}

//! Newton smoothing on a level, with the Jacobian reduced before the linear
//! solve.
//!
//! On the fine level the flux-flux block of the Jacobian is diagonal, so the
//! fluxes are eliminated directly (primal reduction) leaving a system in
//! `(Δpʳ, Δpʷ, Δs)`. Coarse levels lose that structure; there every flux is
//! split into two one-sided copies tied together by a Lagrange multiplier,
//! which makes the flux-pressure block block-diagonal per cell and per well.
//! Eliminating those blocks leaves a system in `(Δλʳ, Δλʷ, Δs)`.
//!
//! Both reductions are instances of [`Condensation`], a static condensation
//! over disjoint square blocks whose row and column index sets coincide.

use crate::assembly::{chop_saturation, scaled_norm, LevelSystem, StepTerms};
use crate::error::{Error, Result};
use crate::linsolve::{self, BlockSystem, LinearConfig};
use crate::sparse::{Csr, Triplets};
use crate::wells::Control;

/// Dense inverse by Gauss-Jordan elimination with partial pivoting.
/// Row-major storage. Local blocks mix flux resistances and incidence
/// numbers many decades apart, so singularity is judged by the residual of
/// the computed inverse relative to the magnitudes involved rather than by
/// pivot size.
fn dense_inverse(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i * n + c].abs().total_cmp(&m[j * n + c].abs()))?;
        let piv = m[p * n + c];
        if piv == 0.0 || !piv.is_finite() {
            return None;
        }
        if p != c {
            for j in 0..n {
                m.swap(p * n + j, c * n + j);
                inv.swap(p * n + j, c * n + j);
            }
        }
        let ip = 1.0 / piv;
        for j in 0..n {
            m[c * n + j] *= ip;
            inv[c * n + j] *= ip;
        }
        for i in 0..n {
            if i == c {
                continue;
            }
            let f = m[i * n + c];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                m[i * n + j] -= f * m[c * n + j];
                inv[i * n + j] -= f * inv[c * n + j];
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            let (mut v, mut mag) = (0.0, 0.0);
            for k in 0..n {
                v += a[i * n + k] * inv[k * n + j];
                mag += (a[i * n + k] * inv[k * n + j]).abs();
            }
            let e = if i == j { 1.0 } else { 0.0 };
            if !((v - e).abs() <= 1e-8 * mag.max(1.0)) {
                return None;
            }
        }
    }
    Some(inv)
}

/// Static condensation of `A x = f` onto the `kept` unknowns after
/// eliminating each block `b` through its local inverse:
/// `S = A_YY − Σ A_Yb A_bb⁻¹ A_bY`, `g = f_Y − Σ A_Yb A_bb⁻¹ f_b`.
pub struct Condensation {
    n: usize,
    blocks: Vec<Vec<usize>>,
    kept: Vec<usize>,
    inv: Vec<Vec<f64>>,
    /// Per block: `A_bY` entries as (row within block, kept position, value).
    a_by: Vec<Vec<(usize, usize, f64)>>,
    f_b: Vec<Vec<f64>>,
}

const NONE: usize = usize::MAX;

impl Condensation {
    /// Returns the condensation data together with the reduced matrix and
    /// right-hand side. Blocks must be disjoint, must not couple to each
    /// other, and together with `kept` must cover all unknowns.
    pub fn new(
        a: &Csr,
        f: &[f64],
        blocks: Vec<Vec<usize>>,
        kept: Vec<usize>,
    ) -> Result<(Self, Csr, Vec<f64>)> {
        let n = a.nrows();
        let mut block_of = vec![(NONE, NONE); n];
        for (b, idx) in blocks.iter().enumerate() {
            for (j, &i) in idx.iter().enumerate() {
                if block_of[i].0 != NONE {
                    return Err(Error::Dimension(format!("unknown {i} in two blocks")));
                }
                block_of[i] = (b, j);
            }
        }
        let mut kept_pos = vec![NONE; n];
        for (k, &i) in kept.iter().enumerate() {
            if block_of[i].0 != NONE || kept_pos[i] != NONE {
                return Err(Error::Dimension(format!("unknown {i} both kept and eliminated")));
            }
            kept_pos[i] = k;
        }
        if (0..n).any(|i| block_of[i].0 == NONE && kept_pos[i] == NONE) {
            return Err(Error::Dimension("condensation does not cover every unknown".into()));
        }

        let mut inv = Vec::with_capacity(blocks.len());
        let mut a_by = Vec::with_capacity(blocks.len());
        let mut f_b: Vec<Vec<f64>> = Vec::with_capacity(blocks.len());
        for (b, idx) in blocks.iter().enumerate() {
            let nb = idx.len();
            let mut dense = vec![0.0; nb * nb];
            let mut by = Vec::new();
            for (j, &row) in idx.iter().enumerate() {
                let (cols, vals) = a.row(row);
                for (&c, &v) in cols.iter().zip(vals) {
                    let (cb, cj) = block_of[c];
                    if cb == b {
                        dense[j * nb + cj] = v;
                    } else if cb != NONE {
                        if v != 0.0 {
                            return Err(Error::Dimension(format!(
                                "blocks {b} and {cb} are coupled"
                            )));
                        }
                    } else {
                        by.push((j, kept_pos[c], v));
                    }
                }
            }
            inv.push(dense_inverse(nb, &dense).ok_or(Error::SingularBlock { block: b })?);
            a_by.push(by);
            f_b.push(idx.iter().map(|&i| f[i]).collect());
        }

        // A_Yb entries grouped by block: (kept row, row within block, value).
        let mut a_yb: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); blocks.len()];
        let nk = kept.len();
        let mut t = Triplets::new(nk, nk);
        let mut g = vec![0.0; nk];
        for (yk, &row) in kept.iter().enumerate() {
            g[yk] = f[row];
            let (cols, vals) = a.row(row);
            for (&c, &v) in cols.iter().zip(vals) {
                let (cb, cj) = block_of[c];
                if cb == NONE {
                    t.push(yk, kept_pos[c], v);
                } else {
                    a_yb[cb].push((yk, cj, v));
                }
            }
        }

        let mut cols_touched: Vec<usize> = Vec::new();
        let mut local_col = vec![NONE; nk];
        for (b, idx) in blocks.iter().enumerate() {
            let nb = idx.len();
            if a_yb[b].is_empty() {
                continue;
            }
            // X = B⁻¹ A_bY (dense over the kept columns this block touches),
            // y = B⁻¹ f_b.
            cols_touched.clear();
            for &(_, yc, _) in &a_by[b] {
                if local_col[yc] == NONE {
                    local_col[yc] = cols_touched.len();
                    cols_touched.push(yc);
                }
            }
            let m = cols_touched.len();
            let mut aby = vec![0.0; nb * m];
            for &(j, yc, v) in &a_by[b] {
                aby[j * m + local_col[yc]] += v;
            }
            let binv = &inv[b];
            let mut x = vec![0.0; nb * m];
            let mut y = vec![0.0; nb];
            for i in 0..nb {
                for l in 0..nb {
                    let bil = binv[i * nb + l];
                    if bil == 0.0 {
                        continue;
                    }
                    y[i] += bil * f_b[b][l];
                    for c in 0..m {
                        x[i * m + c] += bil * aby[l * m + c];
                    }
                }
            }
            for &(yk, j, v) in &a_yb[b] {
                g[yk] -= v * y[j];
                for (c, &yc) in cols_touched.iter().enumerate() {
                    t.push(yk, yc, -v * x[j * m + c]);
                }
            }
            for &yc in &cols_touched {
                local_col[yc] = NONE;
            }
        }
        let cond = Self {
            n,
            blocks,
            kept,
            inv,
            a_by,
            f_b,
        };
        Ok((cond, t.to_csr(), g))
    }

    /// Recovers the full solution from the kept unknowns.
    pub fn back_substitute(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for (&i, &v) in self.kept.iter().zip(y) {
            x[i] = v;
        }
        for (b, idx) in self.blocks.iter().enumerate() {
            let nb = idx.len();
            let mut rhs = self.f_b[b].clone();
            for &(j, yc, v) in &self.a_by[b] {
                rhs[j] -= v * y[yc];
            }
            for (i, &gi) in idx.iter().enumerate() {
                x[gi] = (0..nb).map(|l| self.inv[b][i * nb + l] * rhs[l]).sum();
            }
        }
        x
    }

    pub fn num_kept(&self) -> usize {
        self.kept.len()
    }
}

/// Primal reduction of a level Jacobian: eliminates every flux with its own
/// flux row. Valid whenever the flux-flux block is diagonal. `rhs` is the
/// Newton right-hand side `−(r − b)`.
pub fn reduce_fine_jacobian(
    sys: &LevelSystem,
    jac: &Csr,
    rhs: &[f64],
) -> Result<(Condensation, Csr, Vec<f64>)> {
    let lay = sys.layout;
    let blocks = (0..lay.nf + lay.np).map(|i| vec![i]).collect();
    let kept = (lay.nf + lay.np..lay.len()).collect();
    Condensation::new(jac, rhs, blocks, kept)
}

/// Index layout of the hybridized system.
#[derive(Clone, Copy, Debug)]
pub struct HybridLayout {
    pub nf: usize,
    pub np: usize,
    pub nc: usize,
    pub nw: usize,
}

impl HybridLayout {
    fn sk(&self, e: usize) -> usize {
        e
    }
    fn sl(&self, e: usize) -> usize {
        self.nf + e
    }
    fn scell(&self, i: usize) -> usize {
        2 * self.nf + i
    }
    fn swell(&self, i: usize) -> usize {
        2 * self.nf + self.np + i
    }
    fn pr(&self, k: usize) -> usize {
        2 * self.nf + 2 * self.np + k
    }
    fn pw(&self, w: usize) -> usize {
        2 * self.nf + 2 * self.np + self.nc + w
    }
    fn lr(&self, e: usize) -> usize {
        2 * self.nf + 2 * self.np + self.nc + self.nw + e
    }
    fn lw(&self, i: usize) -> usize {
        3 * self.nf + 2 * self.np + self.nc + self.nw + i
    }
    fn s(&self, k: usize) -> usize {
        3 * self.nf + 3 * self.np + self.nc + self.nw + k
    }
    pub fn len(&self) -> usize {
        3 * self.nf + 3 * self.np + 2 * self.nc + self.nw
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Size of the multiplier block that leads the reduced system.
    pub fn n_multipliers(&self) -> usize {
        self.nf + self.np
    }
}

/// Hybridized form of a level's Newton system.
pub struct Hybrid {
    pub layout: HybridLayout,
    pub matrix: Csr,
    pub rhs: Vec<f64>,
}

/// Builds the hybridized Newton system. Each face flux is duplicated into a
/// copy per adjacent cell, each perforation flux into a cell copy and a well
/// copy. The face equation is split in proportion to the one-sided
/// resistances, the perforation equation with weights `1 − α` (cell side)
/// and `α` (well side); multipliers enforce equality of the copies.
pub fn hybridize(
    sys: &LevelSystem,
    x: &[f64],
    jac: &Csr,
    rhs: &[f64],
    alpha: f64,
) -> Result<Hybrid> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config("alpha split must lie in (0, 1)".into()));
    }
    let lay = sys.layout;
    let hl = HybridLayout {
        nf: lay.nf,
        np: lay.np,
        nc: lay.nc,
        nw: lay.nw,
    };
    let s = &x[lay.s()];
    let (o_pr, o_pw, o_s) = (lay.p_r().start, lay.p_w().start, lay.s().start);
    let mut t = Triplets::new(hl.len(), hl.len());
    let mut h_rhs = vec![0.0; hl.len()];

    for (e, f) in sys.faces.iter().enumerate() {
        let mk = f.ck / sys.fluid.total_mobility(s[f.k]);
        let ml = f.cl / sys.fluid.total_mobility(s[f.l]);
        let (wk, wl) = (mk / (mk + ml), ml / (mk + ml));
        let (rk, rl) = (hl.sk(e), hl.sl(e));
        t.push(rk, hl.sk(e), mk);
        t.push(rk, hl.s(f.k), jac.get(e, o_s + f.k));
        t.push(rk, hl.pr(f.k), -f.d);
        t.push(rk, hl.lr(e), f.d);
        h_rhs[rk] = wk * rhs[e];

        t.push(rl, hl.sl(e), ml);
        t.push(rl, hl.s(f.l), jac.get(e, o_s + f.l));
        t.push(rl, hl.lr(e), -f.d);
        t.push(rl, hl.pr(f.l), f.d);
        h_rhs[rl] = wl * rhs[e];

        t.push(hl.pr(f.k), hl.sk(e), f.d);
        t.push(hl.pr(f.l), hl.sl(e), -f.d);

        t.push(hl.lr(e), hl.sk(e), 1.0);
        t.push(hl.lr(e), hl.sl(e), -1.0);

        let (tk, tl) = (o_s + f.k, o_s + f.l);
        t.push(hl.s(f.k), hl.sk(e), jac.get(tk, e));
        t.push(hl.s(f.l), hl.sl(e), jac.get(tl, e));
    }
    for (i, p) in sys.perfs.iter().enumerate() {
        let row = lay.nf + i;
        let m = p.c / sys.fluid.total_mobility(s[p.cell]);
        let (rc, rw) = (hl.scell(i), hl.swell(i));
        t.push(rc, hl.scell(i), (1.0 - alpha) * m);
        t.push(rc, hl.s(p.cell), jac.get(row, o_s + p.cell));
        t.push(rc, hl.pr(p.cell), -p.d);
        t.push(rc, hl.lw(i), p.d);
        h_rhs[rc] = (1.0 - alpha) * rhs[row];

        t.push(rw, hl.swell(i), alpha * m);
        t.push(rw, hl.lw(i), -p.d);
        t.push(rw, hl.pw(p.well), p.d);
        h_rhs[rw] = alpha * rhs[row];

        t.push(hl.pr(p.cell), hl.scell(i), p.d);
        if let Control::Rate(_) = sys.controls[p.well] {
            t.push(hl.pw(p.well), hl.swell(i), -p.d);
        }

        t.push(hl.lw(i), hl.swell(i), 1.0);
        t.push(hl.lw(i), hl.scell(i), -1.0);

        t.push(hl.s(p.cell), hl.scell(i), jac.get(o_s + p.cell, row));
    }
    for k in 0..lay.nc {
        h_rhs[hl.pr(k)] = rhs[o_pr + k];
        h_rhs[hl.s(k)] = rhs[o_s + k];
        let (cols, vals) = jac.row(o_s + k);
        for (&c, &v) in cols.iter().zip(vals) {
            if c >= o_s {
                t.push(hl.s(k), hl.s(c - o_s), v);
            }
        }
    }
    for (w, c) in sys.controls.iter().enumerate() {
        h_rhs[hl.pw(w)] = rhs[o_pw + w];
        if let Control::Bhp(_) = c {
            t.push(hl.pw(w), hl.pw(w), 1.0);
        }
    }
    Ok(Hybrid {
        layout: hl,
        matrix: t.to_csr(),
        rhs: h_rhs,
    })
}

/// Condenses a hybridized system onto `(λʳ, λʷ, s)`: one local block per
/// cell (its one-sided fluxes, perforation cell copies and pressure) and one
/// per well (its perforation well copies and pressure).
pub fn condense_hybrid(sys: &LevelSystem, h: &Hybrid) -> Result<(Condensation, Csr, Vec<f64>)> {
    let hl = h.layout;
    let mut cell_blocks: Vec<Vec<usize>> = vec![Vec::new(); hl.nc];
    for (e, f) in sys.faces.iter().enumerate() {
        cell_blocks[f.k].push(hl.sk(e));
        cell_blocks[f.l].push(hl.sl(e));
    }
    let mut well_blocks: Vec<Vec<usize>> = vec![Vec::new(); hl.nw];
    for (i, p) in sys.perfs.iter().enumerate() {
        cell_blocks[p.cell].push(hl.scell(i));
        well_blocks[p.well].push(hl.swell(i));
    }
    for (k, b) in cell_blocks.iter_mut().enumerate() {
        b.push(hl.pr(k));
    }
    for (w, b) in well_blocks.iter_mut().enumerate() {
        b.push(hl.pw(w));
    }
    let mut blocks = cell_blocks;
    blocks.extend(well_blocks);
    let kept: Vec<usize> = (hl.lr(0)..hl.len()).collect();
    Condensation::new(&h.matrix, &h.rhs, blocks, kept)
}

/// How the Newton system of a level is reduced before the linear solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reduction {
    Primal,
    Hybrid { alpha: f64 },
}

/// Newton update `Δx` solving `J Δx = −(r(x) − b)` through the chosen
/// reduction. Returns the update and the linear iteration count.
pub fn newton_update(
    sys: &LevelSystem,
    step: &StepTerms,
    x: &[f64],
    b: Option<&[f64]>,
    reduction: Reduction,
    lin: &LinearConfig,
) -> Result<(Vec<f64>, usize)> {
    let lay = sys.layout;
    let mut rhs = sys.residual(x, step);
    for (i, v) in rhs.iter_mut().enumerate() {
        *v = -(*v - b.map_or(0.0, |b| b[i]));
    }
    let jac = sys.jacobian(x, step);
    match reduction {
        Reduction::Primal => {
            let (cond, s, g) = reduce_fine_jacobian(sys, &jac, &rhs)?;
            let bs = BlockSystem {
                matrix: &s,
                rhs: &g,
                n_pressure: lay.nc + lay.nw,
            };
            let (y, it) = linsolve::solve(&bs, lin)?;
            Ok((cond.back_substitute(&y), it))
        }
        Reduction::Hybrid { alpha } => {
            let h = hybridize(sys, x, &jac, &rhs, alpha)?;
            let (cond, s, g) = condense_hybrid(sys, &h)?;
            let bs = BlockSystem {
                matrix: &s,
                rhs: &g,
                n_pressure: h.layout.n_multipliers(),
            };
            let (y, it) = linsolve::solve(&bs, lin)?;
            let full = cond.back_substitute(&y);
            Ok((unhybridize(sys, &h.layout, &full), it))
        }
    }
}

/// Maps a hybrid solution back to the level's unknowns; each flux takes the
/// value of its cell-side copy.
pub fn unhybridize(sys: &LevelSystem, hl: &HybridLayout, full: &[f64]) -> Vec<f64> {
    let lay = sys.layout;
    let mut dx = vec![0.0; lay.len()];
    for e in 0..lay.nf {
        dx[e] = full[hl.sk(e)];
    }
    for i in 0..lay.np {
        dx[lay.nf + i] = full[hl.scell(i)];
    }
    for k in 0..lay.nc {
        dx[lay.p_r().start + k] = full[hl.pr(k)];
        dx[lay.s().start + k] = full[hl.s(k)];
    }
    for w in 0..lay.nw {
        dx[lay.p_w().start + w] = full[hl.pw(w)];
    }
    dx
}

/// Largest mismatch between the two copies of every flux in a hybrid
/// solution, relative to the largest flux copy.
pub fn continuity_defect(sys: &LevelSystem, hl: &HybridLayout, full: &[f64]) -> f64 {
    let mut defect = 0.0f64;
    let mut scale = 0.0f64;
    for e in 0..sys.layout.nf {
        defect = defect.max((full[hl.sk(e)] - full[hl.sl(e)]).abs());
        scale = scale.max(full[hl.sk(e)].abs());
    }
    for i in 0..sys.layout.np {
        defect = defect.max((full[hl.scell(i)] - full[hl.swell(i)]).abs());
        scale = scale.max(full[hl.scell(i)].abs());
    }
    if scale > 0.0 {
        defect / scale
    } else {
        defect
    }
}

/// Settings for Newton smoothing on one level.
#[derive(Clone, Copy, Debug)]
pub struct SmoothSettings<'a> {
    pub reduction: Reduction,
    pub linear: &'a LinearConfig,
    /// Clamp saturations to `[0, 1]` after every update.
    pub chop: bool,
    /// Stop early once the scaled norm of `r − b` falls below this.
    pub tolerance: Option<f64>,
}

/// Outcome of a smoothing call.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SmoothStats {
    pub updates: usize,
    pub linear_iterations: usize,
}

/// Applies up to `n_steps` plain Newton updates to `x` for `r(x) = b`.
pub fn newton_smooth(
    sys: &LevelSystem,
    step: &StepTerms,
    x: &mut [f64],
    b: Option<&[f64]>,
    n_steps: usize,
    settings: &SmoothSettings<'_>,
) -> Result<SmoothStats> {
    let mut stats = SmoothStats::default();
    let weights = settings.tolerance.map(|_| sys.residual_scaling(step.dt));
    for _ in 0..n_steps {
        if let (Some(tol), Some(w)) = (settings.tolerance, weights.as_ref()) {
            let mut r = sys.residual(x, step);
            if let Some(b) = b {
                for (ri, bi) in r.iter_mut().zip(b) {
                    *ri -= bi;
                }
            }
            if scaled_norm(&r, w) <= tol {
                break;
            }
        }
        let (dx, it) = newton_update(sys, step, x, b, settings.reduction, settings.linear)?;
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
        if settings.chop {
            chop_saturation(&sys.layout, x);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Nonlinear("Newton update produced non-finite values".into()));
        }
        stats.updates += 1;
        stats.linear_iterations += it;
    }
    Ok(stats)
}

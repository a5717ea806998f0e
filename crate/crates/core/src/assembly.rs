//! Discrete residual and Jacobian of the fully implicit two-phase system with
//! wells.
//!
//! Every level of the multigrid hierarchy, the fine one included, is
//! described by the same [`LevelSystem`]: a list of face connections with
//! one-sided resistances, a list of perforation connections, pore volumes and
//! well controls. On the fine level the resistances are inverse one-sided
//! transmissibilities and all incidence weights are 1; coarse levels sum
//! these over bundles of fine connections, which makes the coarse residual
//! equal to the Galerkin composition `R r(P x)` without touching the fine
//! level.
//!
//! Unknowns are laid out as `[σʳ | σʷ | pʳ | pʷ | s]` and residual rows follow
//! the same order: face fluxes, perforation fluxes, cell conservation, well
//! controls, transport.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::fluid::FluidModel;
use crate::grid::Mesh;
use crate::sparse::{Csr, Triplets};
use crate::wells::{Control, WellSet};

/// Block sizes of the state vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub nf: usize,
    pub np: usize,
    pub nc: usize,
    pub nw: usize,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.nf + self.np + 2 * self.nc + self.nw
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sigma_r(&self) -> Range<usize> {
        0..self.nf
    }

    pub fn sigma_w(&self) -> Range<usize> {
        self.nf..self.nf + self.np
    }

    pub fn p_r(&self) -> Range<usize> {
        let o = self.nf + self.np;
        o..o + self.nc
    }

    pub fn p_w(&self) -> Range<usize> {
        let o = self.nf + self.np + self.nc;
        o..o + self.nw
    }

    pub fn s(&self) -> Range<usize> {
        let o = self.nf + self.np + self.nc + self.nw;
        o..o + self.nc
    }
}

/// State vector with its block layout.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub layout: Layout,
    pub values: Vec<f64>,
}

impl StateVector {
    pub fn zeros(layout: Layout) -> Self {
        Self {
            layout,
            values: vec![0.0; layout.len()],
        }
    }

    pub fn from_values(layout: Layout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Dimension(format!(
                "state has {} entries, layout expects {}",
                values.len(),
                layout.len()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn sigma_r(&self) -> &[f64] {
        &self.values[self.layout.sigma_r()]
    }

    pub fn sigma_w(&self) -> &[f64] {
        &self.values[self.layout.sigma_w()]
    }

    pub fn p_r(&self) -> &[f64] {
        &self.values[self.layout.p_r()]
    }

    pub fn p_w(&self) -> &[f64] {
        &self.values[self.layout.p_w()]
    }

    pub fn s(&self) -> &[f64] {
        &self.values[self.layout.s()]
    }

    pub fn s_mut(&mut self) -> &mut [f64] {
        let r = self.layout.s();
        &mut self.values[r]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Face connection between cells `k < l`. The flux residual is
/// `(ck/λ(s_k) + cl/λ(s_l)) σ − d (p_k − p_l)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SysFace {
    pub k: usize,
    pub l: usize,
    pub ck: f64,
    pub cl: f64,
    pub d: f64,
}

/// Perforation connection. The flux residual is
/// `(c/λ(s_cell)) σ − d (p_cell − p^w)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SysPerf {
    pub cell: usize,
    pub well: usize,
    pub c: f64,
    pub d: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelSystem {
    pub layout: Layout,
    pub faces: Vec<SysFace>,
    /// Grouped by well, in increasing well order.
    pub perfs: Vec<SysPerf>,
    /// `φ|τ|` per cell, m³.
    pub pore_volume: Vec<f64>,
    /// `|τ|` per cell, m³. Only used to weight pressure projections.
    pub bulk_volume: Vec<f64>,
    pub controls: Vec<Control>,
    pub fluid: FluidModel,
}

/// Time-step dependent data: step size and the accumulation term of the
/// previous time level (`W s^{m−1}` on the fine level, restricted below).
#[derive(Clone, Debug, PartialEq)]
pub struct StepTerms {
    pub dt: f64,
    pub h: Vec<f64>,
}

impl StepTerms {
    pub fn new(sys: &LevelSystem, s_prev: &[f64], dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Config("time step must be > 0".into()));
        }
        if s_prev.len() != sys.layout.nc {
            return Err(Error::Dimension("previous saturation length".into()));
        }
        let h = sys
            .pore_volume
            .iter()
            .zip(s_prev)
            .map(|(w, s)| w * s)
            .collect();
        Ok(Self { dt, h })
    }
}

#[inline]
fn face_upwind_is_k(sigma: f64) -> bool {
    sigma > 0.0
}

struct CellFns {
    lam: Vec<f64>,
    dlam: Vec<f64>,
    f: Vec<f64>,
    df: Vec<f64>,
}

impl LevelSystem {
    /// Fine-level system of a mesh and its wells.
    pub fn fine(mesh: &Mesh, wells: &WellSet, fluid: FluidModel) -> Result<Self> {
        fluid.validate()?;
        let faces = mesh
            .faces()
            .iter()
            .map(|f| SysFace {
                k: f.k,
                l: f.l,
                ck: 1.0 / f.trans_k,
                cl: 1.0 / f.trans_l,
                d: 1.0,
            })
            .collect();
        let mut perfs = Vec::with_capacity(wells.num_perforations());
        for (w, p) in wells.perforations() {
            if p.cell >= mesh.num_cells() {
                return Err(Error::Well(format!("perforation in nonexistent cell {}", p.cell)));
            }
            perfs.push(SysPerf {
                cell: p.cell,
                well: w,
                c: 1.0 / p.wi,
                d: 1.0,
            });
        }
        let layout = Layout {
            nf: mesh.num_faces(),
            np: perfs.len(),
            nc: mesh.num_cells(),
            nw: wells.len(),
        };
        Ok(Self {
            layout,
            faces,
            perfs,
            pore_volume: mesh.cells().iter().map(|c| c.pore_volume()).collect(),
            bulk_volume: mesh.cells().iter().map(|c| c.volume).collect(),
            controls: wells.wells().iter().map(|w| w.control).collect(),
            fluid,
        })
    }

    fn cell_fns(&self, s: &[f64]) -> CellFns {
        let n = s.len();
        let mut out = CellFns {
            lam: Vec::with_capacity(n),
            dlam: Vec::with_capacity(n),
            f: Vec::with_capacity(n),
            df: Vec::with_capacity(n),
        };
        for &si in s {
            let (l, dl) = self.fluid.total_mobility_with_derivative(si);
            let (f, df) = self.fluid.fractional_flow_with_derivative(si);
            out.lam.push(l);
            out.dlam.push(dl);
            out.f.push(f);
            out.df.push(df);
        }
        out
    }

    /// Fractional flow carried by a perforation and whether it is taken from
    /// the perforated cell.
    #[inline]
    fn perf_upwind(&self, p: &SysPerf, sigma: f64, f_cell: f64) -> (f64, bool) {
        if sigma > 0.0 || !self.controls[p.well].is_injector() {
            (f_cell, true)
        } else {
            (1.0, false)
        }
    }

    pub fn residual(&self, x: &[f64], step: &StepTerms) -> Vec<f64> {
        let lay = self.layout;
        assert_eq!(x.len(), lay.len());
        let sig_r = &x[lay.sigma_r()];
        let sig_w = &x[lay.sigma_w()];
        let pr = &x[lay.p_r()];
        let pw = &x[lay.p_w()];
        let s = &x[lay.s()];
        let fns = self.cell_fns(s);

        let mut r = vec![0.0; lay.len()];
        let (o_cons, o_ctrl, o_tr) = (lay.p_r().start, lay.p_w().start, lay.s().start);

        for (e, f) in self.faces.iter().enumerate() {
            let q = sig_r[e];
            r[e] = (f.ck / fns.lam[f.k] + f.cl / fns.lam[f.l]) * q - f.d * (pr[f.k] - pr[f.l]);
            r[o_cons + f.k] += f.d * q;
            r[o_cons + f.l] -= f.d * q;
            let fu = if face_upwind_is_k(q) { fns.f[f.k] } else { fns.f[f.l] };
            let adv = f.d * q * fu;
            r[o_tr + f.k] += adv;
            r[o_tr + f.l] -= adv;
        }
        for (i, p) in self.perfs.iter().enumerate() {
            let q = sig_w[i];
            r[lay.nf + i] = (p.c / fns.lam[p.cell]) * q - p.d * (pr[p.cell] - pw[p.well]);
            r[o_cons + p.cell] += p.d * q;
            if let Control::Rate(_) = self.controls[p.well] {
                r[o_ctrl + p.well] -= p.d * q;
            }
            let (fu, _) = self.perf_upwind(p, q, fns.f[p.cell]);
            r[o_tr + p.cell] += p.d * q * fu;
        }
        for (w, c) in self.controls.iter().enumerate() {
            match *c {
                Control::Bhp(t) => r[o_ctrl + w] = pw[w] - t,
                Control::Rate(t) => r[o_ctrl + w] -= t,
            }
        }
        for k in 0..lay.nc {
            r[o_tr + k] += (self.pore_volume[k] * s[k] - step.h[k]) / step.dt;
        }
        r
    }

    /// Analytic Jacobian with upwind directions frozen at the current fluxes.
    pub fn jacobian(&self, x: &[f64], step: &StepTerms) -> Csr {
        let lay = self.layout;
        assert_eq!(x.len(), lay.len());
        let sig_r = &x[lay.sigma_r()];
        let sig_w = &x[lay.sigma_w()];
        let s = &x[lay.s()];
        let fns = self.cell_fns(s);
        let (o_sw, o_pr, o_pw, o_s) = (lay.nf, lay.p_r().start, lay.p_w().start, lay.s().start);
        let (o_cons, o_ctrl, o_tr) = (o_pr, o_pw, o_s);

        let n = lay.len();
        let mut t = Triplets::with_capacity(n, n, 12 * lay.nf + 10 * lay.np + 2 * lay.nc);
        for (e, f) in self.faces.iter().enumerate() {
            let q = sig_r[e];
            let (lk, ll) = (fns.lam[f.k], fns.lam[f.l]);
            t.push(e, e, f.ck / lk + f.cl / ll);
            t.push(e, o_pr + f.k, -f.d);
            t.push(e, o_pr + f.l, f.d);
            t.push(e, o_s + f.k, -f.ck * fns.dlam[f.k] / (lk * lk) * q);
            t.push(e, o_s + f.l, -f.cl * fns.dlam[f.l] / (ll * ll) * q);

            t.push(o_cons + f.k, e, f.d);
            t.push(o_cons + f.l, e, -f.d);

            let up = if face_upwind_is_k(q) { f.k } else { f.l };
            let fu = fns.f[up];
            t.push(o_tr + f.k, e, f.d * fu);
            t.push(o_tr + f.l, e, -f.d * fu);
            let ds = f.d * q * fns.df[up];
            t.push(o_tr + f.k, o_s + up, ds);
            t.push(o_tr + f.l, o_s + up, -ds);
        }
        for (i, p) in self.perfs.iter().enumerate() {
            let q = sig_w[i];
            let row = o_sw + i;
            let lam = fns.lam[p.cell];
            t.push(row, row, p.c / lam);
            t.push(row, o_pr + p.cell, -p.d);
            t.push(row, o_pw + p.well, p.d);
            t.push(row, o_s + p.cell, -p.c * fns.dlam[p.cell] / (lam * lam) * q);

            t.push(o_cons + p.cell, row, p.d);
            if let Control::Rate(_) = self.controls[p.well] {
                t.push(o_ctrl + p.well, row, -p.d);
            }
            let (fu, from_cell) = self.perf_upwind(p, q, fns.f[p.cell]);
            t.push(o_tr + p.cell, row, p.d * fu);
            if from_cell {
                t.push(o_tr + p.cell, o_s + p.cell, p.d * q * fns.df[p.cell]);
            }
        }
        for (w, c) in self.controls.iter().enumerate() {
            if let Control::Bhp(_) = c {
                t.push(o_ctrl + w, o_pw + w, 1.0);
            }
        }
        for k in 0..lay.nc {
            t.push(o_tr + k, o_s + k, self.pore_volume[k] / step.dt);
        }
        t.to_csr()
    }

    /// Row weights that turn residual rows into dimensionless quantities:
    /// flux rows into flux errors relative to the reference rate,
    /// conservation and rate rows relative to the reference rate, pressure
    /// control rows relative to the target, transport rows into saturation
    /// changes.
    pub fn residual_scaling(&self, dt: f64) -> Vec<f64> {
        let lay = self.layout;
        let q_ref = self.reference_rate();
        let lam_ref = (1.0 / self.fluid.mu_w).max(1.0 / self.fluid.mu_nw);
        let mut w = vec![0.0; lay.len()];
        for (e, f) in self.faces.iter().enumerate() {
            w[e] = lam_ref / ((f.ck + f.cl) * q_ref);
        }
        for (i, p) in self.perfs.iter().enumerate() {
            w[lay.nf + i] = lam_ref / (p.c * q_ref);
        }
        for k in lay.p_r() {
            w[k] = 1.0 / q_ref;
        }
        for (j, c) in self.controls.iter().enumerate() {
            w[lay.p_w().start + j] = match *c {
                Control::Bhp(t) => 1.0 / t.abs().max(1.0),
                Control::Rate(_) => 1.0 / q_ref,
            };
        }
        for (k, pv) in self.pore_volume.iter().enumerate() {
            w[lay.s().start + k] = dt / pv;
        }
        w
    }

    /// Total injection target, or 1 m³/s when no well injects.
    pub fn reference_rate(&self) -> f64 {
        let q: f64 = self
            .controls
            .iter()
            .map(|c| match *c {
                Control::Rate(q) => q.abs(),
                Control::Bhp(_) => 0.0,
            })
            .sum();
        if q > 0.0 {
            q
        } else {
            1.0
        }
    }

    /// Largest cell CFL number using the model's maximum `f_w'`.
    pub fn cfl_number(&self, x: &[f64], dt: f64) -> f64 {
        self.cfl_number_with_slope(x, dt, self.fluid.max_fractional_flow_derivative())
    }

    /// `max_K dt · (outgoing flux of K) · max_f' / (φ|τ|)_K`.
    pub fn cfl_number_with_slope(&self, x: &[f64], dt: f64, max_slope: f64) -> f64 {
        let lay = self.layout;
        let sig_r = &x[lay.sigma_r()];
        let sig_w = &x[lay.sigma_w()];
        let mut out = vec![0.0; lay.nc];
        for (f, &q) in self.faces.iter().zip(sig_r) {
            if q > 0.0 {
                out[f.k] += f.d * q;
            } else {
                out[f.l] -= f.d * q;
            }
        }
        for (p, &q) in self.perfs.iter().zip(sig_w) {
            if q > 0.0 {
                out[p.cell] += p.d * q;
            }
        }
        out.iter()
            .zip(&self.pore_volume)
            .map(|(o, pv)| dt * o * max_slope / pv)
            .fold(0.0, f64::max)
    }

    /// Incidence matrices `(D^{r,r}, D^{r,w}, D^{w,w})` of the conservation
    /// and rate-control rows.
    pub fn incidence(&self) -> (Csr, Csr, Csr) {
        let lay = self.layout;
        let mut drr = Triplets::new(lay.nc, lay.nf);
        for (e, f) in self.faces.iter().enumerate() {
            drr.push(f.k, e, f.d);
            drr.push(f.l, e, -f.d);
        }
        let mut drw = Triplets::new(lay.nc, lay.np);
        let mut dww = Triplets::new(lay.nw, lay.np);
        for (i, p) in self.perfs.iter().enumerate() {
            drw.push(p.cell, i, p.d);
            if let Control::Rate(_) = self.controls[p.well] {
                dww.push(p.well, i, -p.d);
            }
        }
        (drr.to_csr(), drw.to_csr(), dww.to_csr())
    }

    /// Rest state: zero fluxes, all pressures at `p0`, zero saturation.
    pub fn initial_state(&self, p0: f64) -> Vec<f64> {
        let lay = self.layout;
        let mut x = vec![0.0; lay.len()];
        for v in &mut x[lay.p_r().start..lay.p_w().end] {
            *v = p0;
        }
        x
    }
}

/// `‖w ∘ r‖₂`
pub fn scaled_norm(r: &[f64], weights: &[f64]) -> f64 {
    r.iter()
        .zip(weights)
        .map(|(a, b)| (a * b) * (a * b))
        .sum::<f64>()
        .sqrt()
}

/// Clamps the saturation block to `[0, 1]`.
pub fn chop_saturation(layout: &Layout, x: &mut [f64]) {
    for v in &mut x[layout.s()] {
        *v = v.clamp(0.0, 1.0);
    }
}

//! Aggregation hierarchy with lowest-order intergrid operators.
//!
//! A coarse cell is a connected aggregate of finer cells; a coarse face
//! bundles all finer faces between two adjacent aggregates and a coarse
//! perforation bundles all perforations of one well inside one aggregate.
//! Wells are never coarsened. Interpolation `P` is piecewise constant for
//! pressures and saturations and a signed indicator for fluxes, restriction
//! is `R = Pᵀ`, and projection `Q` averages with weights chosen so that
//! `Q P = I` holds exactly in floating point.

use std::collections::BTreeMap;

use crate::assembly::{Layout, LevelSystem, StepTerms, SysFace, SysPerf};
use crate::error::{Error, Result};
use crate::grid::ConnectivityGraph;
use crate::partition::{well_aware_partition, Partition};
use crate::sparse::{Csr, Triplets};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HierarchyParams {
    /// Total number of levels including the fine one.
    pub levels: usize,
    /// Target average aggregate size.
    pub coarsening_factor: f64,
    pub well_layers: usize,
    pub well_edge_scale: f64,
    pub seed: u64,
}

impl Default for HierarchyParams {
    fn default() -> Self {
        Self {
            levels: 3,
            coarsening_factor: 32.0,
            well_layers: 4,
            well_edge_scale: 1e6,
            seed: 0,
        }
    }
}

/// Transfer from one level to the next coarser one, plus the coarser system.
#[derive(Clone, Debug)]
pub struct Level {
    /// Finer cell → coarse cell.
    pub aggregate_of: Vec<usize>,
    /// Finer faces of each coarse face with their orientation relative to it.
    pub face_bundles: Vec<Vec<(usize, f64)>>,
    /// Finer perforations of each coarse perforation.
    pub perf_bundles: Vec<Vec<usize>>,
    /// Interpolation, coarse state → finer state.
    pub p: Csr,
    /// Restriction `Pᵀ`.
    pub r: Csr,
    /// Projection, finer state → coarse state.
    pub q: Csr,
    pub system: LevelSystem,
}

impl Level {
    /// Sums a per-cell quantity over aggregates (the saturation block of `R`).
    pub fn restrict_cell_sum(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.system.layout.nc];
        for (i, &a) in self.aggregate_of.iter().enumerate() {
            out[a] += v[i];
        }
        out
    }

    pub fn interpolate(&self, xc: &[f64]) -> Vec<f64> {
        self.p.matvec(xc)
    }

    pub fn restrict(&self, r: &[f64]) -> Vec<f64> {
        self.r.matvec(r)
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.q.matvec(x)
    }
}

#[derive(Clone, Debug)]
pub struct Hierarchy {
    pub fine: LevelSystem,
    /// `levels[i]` maps level `i` to level `i + 1`.
    pub levels: Vec<Level>,
}

impl Hierarchy {
    /// Builds up to `params.levels` levels. Coarsening stops early once a
    /// level has a single cell.
    pub fn build(fine: LevelSystem, params: &HierarchyParams) -> Result<Self> {
        if params.levels == 0 {
            return Err(Error::Hierarchy("at least one level is required".into()));
        }
        if !(params.coarsening_factor >= 2.0) {
            return Err(Error::Hierarchy("coarsening factor must be >= 2".into()));
        }
        let mut levels: Vec<Level> = Vec::new();
        for l in 1..params.levels {
            let sys = levels.last().map_or(&fine, |lv| &lv.system);
            let nc = sys.layout.nc;
            if nc <= 1 {
                break;
            }
            let k = ((nc as f64 / params.coarsening_factor).ceil() as usize).max(1);
            let graph = cell_graph(sys);
            let well_cells = well_cells(sys);
            let part = well_aware_partition(
                &graph,
                &well_cells,
                params.well_layers,
                params.well_edge_scale,
                k,
                params.seed.wrapping_add(l as u64),
            )?;
            if part.num_parts() >= nc {
                break;
            }
            levels.push(coarsen(sys, &part)?);
        }
        Ok(Self { fine, levels })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len() + 1
    }

    pub fn system(&self, l: usize) -> &LevelSystem {
        if l == 0 {
            &self.fine
        } else {
            &self.levels[l - 1].system
        }
    }

    /// Step terms on every level, obtained by restricting the fine ones.
    pub fn step_terms(&self, fine: &StepTerms) -> Vec<StepTerms> {
        let mut out = vec![fine.clone()];
        for lv in &self.levels {
            let h = lv.restrict_cell_sum(&out.last().unwrap().h);
            out.push(StepTerms { dt: fine.dt, h });
        }
        out
    }
}

/// Unit-weight cell graph of a level.
pub fn cell_graph(sys: &LevelSystem) -> ConnectivityGraph {
    let edges = sys.faces.iter().map(|f| (f.k, f.l, 1)).collect();
    ConnectivityGraph::new(sys.layout.nc, edges).expect("level faces form a simple graph")
}

/// Perforated cells of every well on a level.
pub fn well_cells(sys: &LevelSystem) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); sys.layout.nw];
    for p in &sys.perfs {
        out[p.well].push(p.cell);
    }
    out
}

/// Normalized weights over `members` (ascending) whose sequential sum, and
/// therefore every dot product with an all-ones vector, is exactly 1: the
/// last weight absorbs the rounding of the others.
fn exact_weights(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    if let Some((last, head)) = w.split_last_mut() {
        let s: f64 = head.iter().sum();
        *last = 1.0 - s;
    }
    w
}

/// Coarsens one level according to a cell partition.
pub fn coarsen(fine: &LevelSystem, part: &Partition) -> Result<Level> {
    let fl = fine.layout;
    if part.num_vertices() != fl.nc {
        return Err(Error::Hierarchy("partition size does not match the level".into()));
    }
    let graph = cell_graph(fine);
    if !part.parts_connected(&graph) {
        return Err(Error::Hierarchy("disconnected aggregate".into()));
    }
    let agg = part.assignment().to_vec();
    let nc = part.num_parts();
    let members = part.members();

    let mut face_map: BTreeMap<(usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
    for (e, f) in fine.faces.iter().enumerate() {
        let (a, b) = (agg[f.k], agg[f.l]);
        if a == b {
            continue;
        }
        let sign = if a < b { 1.0 } else { -1.0 };
        face_map.entry((a.min(b), a.max(b))).or_default().push((e, sign));
    }
    let mut faces = Vec::with_capacity(face_map.len());
    let mut face_bundles = Vec::with_capacity(face_map.len());
    for ((a, b), bundle) in face_map {
        let mut cf = SysFace { k: a, l: b, ck: 0.0, cl: 0.0, d: 0.0 };
        for &(e, sign) in &bundle {
            let f = &fine.faces[e];
            if sign > 0.0 {
                cf.ck += f.ck;
                cf.cl += f.cl;
            } else {
                cf.ck += f.cl;
                cf.cl += f.ck;
            }
            cf.d += f.d;
        }
        faces.push(cf);
        face_bundles.push(bundle);
    }

    let mut perf_map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, p) in fine.perfs.iter().enumerate() {
        perf_map.entry((p.well, agg[p.cell])).or_default().push(i);
    }
    let mut perfs = Vec::with_capacity(perf_map.len());
    let mut perf_bundles = Vec::with_capacity(perf_map.len());
    for ((well, cell), bundle) in perf_map {
        let mut cp = SysPerf { cell, well, c: 0.0, d: 0.0 };
        for &i in &bundle {
            cp.c += fine.perfs[i].c;
            cp.d += fine.perfs[i].d;
        }
        perfs.push(cp);
        perf_bundles.push(bundle);
    }

    let mut pore_volume = vec![0.0; nc];
    let mut bulk_volume = vec![0.0; nc];
    for (k, &a) in agg.iter().enumerate() {
        pore_volume[a] += fine.pore_volume[k];
        bulk_volume[a] += fine.bulk_volume[k];
    }
    if pore_volume.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Hierarchy("aggregate with zero volume".into()));
    }

    let cl = Layout {
        nf: faces.len(),
        np: perfs.len(),
        nc,
        nw: fl.nw,
    };
    let system = LevelSystem {
        layout: cl,
        faces,
        perfs,
        pore_volume,
        bulk_volume,
        controls: fine.controls.clone(),
        fluid: fine.fluid,
    };

    let mut p = Triplets::new(fl.len(), cl.len());
    let mut q = Triplets::new(cl.len(), fl.len());
    for (c, bundle) in face_bundles.iter().enumerate() {
        let mut sorted = bundle.clone();
        sorted.sort_by_key(|&(e, _)| e);
        let w = exact_weights(&vec![1.0; sorted.len()]);
        for (&(e, sign), wj) in sorted.iter().zip(w) {
            p.push(e, c, sign);
            q.push(c, e, sign * wj);
        }
    }
    for (c, bundle) in perf_bundles.iter().enumerate() {
        let w = exact_weights(&vec![1.0; bundle.len()]);
        for (&i, wj) in bundle.iter().zip(w) {
            p.push(fl.nf + i, cl.nf + c, 1.0);
            q.push(cl.nf + c, fl.nf + i, wj);
        }
    }
    let (fpr, cpr) = (fl.p_r().start, cl.p_r().start);
    let (fs, cs) = (fl.s().start, cl.s().start);
    for (a, mem) in members.iter().enumerate() {
        let wp = exact_weights(&mem.iter().map(|&k| fine.bulk_volume[k]).collect::<Vec<_>>());
        let ws = exact_weights(&mem.iter().map(|&k| fine.pore_volume[k]).collect::<Vec<_>>());
        for ((&k, wpk), wsk) in mem.iter().zip(wp).zip(ws) {
            p.push(fpr + k, cpr + a, 1.0);
            p.push(fs + k, cs + a, 1.0);
            q.push(cpr + a, fpr + k, wpk);
            q.push(cs + a, fs + k, wsk);
        }
    }
    for w in 0..fl.nw {
        p.push(fl.p_w().start + w, cl.p_w().start + w, 1.0);
        q.push(cl.p_w().start + w, fl.p_w().start + w, 1.0);
    }
    let p = p.to_csr();
    let r = p.transpose();
    Ok(Level {
        aggregate_of: agg,
        face_bundles,
        perf_bundles,
        p,
        r,
        q: q.to_csr(),
        system,
    })
}

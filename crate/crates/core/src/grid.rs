//! Finite-volume mesh: cells, oriented interior faces with one-sided
//! transmissibilities, and connectivity graphs.
//!
//! Cells carry a diagonal permeability tensor. Interior faces are stored
//! with `k < l`; the face normal points from `k` to `l`. Boundary faces are
//! not represented (no-flow everywhere).

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::wells::WellSet;

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    /// m³
    pub volume: f64,
    pub porosity: f64,
    /// Diagonal permeability (kx, ky, kz) in m².
    pub perm: [f64; 3],
    /// Barycenter, m.
    pub center: [f64; 3],
}

impl Cell {
    pub fn pore_volume(&self) -> f64 {
        self.porosity * self.volume
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    pub k: usize,
    pub l: usize,
    /// m²
    pub area: f64,
    /// Collocation point on the face (face centroid for generated meshes).
    pub center: Option<[f64; 3]>,
    /// One-sided transmissibility on the `k` side, m³.
    pub trans_k: f64,
    /// One-sided transmissibility on the `l` side, m³.
    pub trans_l: f64,
}

/// Structured-grid metadata kept for Cartesian meshes (used by the well
/// index formula and the VTK writer).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CartesianDims {
    pub n: [usize; 3],
    pub h: [f64; 3],
}

impl CartesianDims {
    pub fn cell_count(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n[0] * (j + self.n[1] * k)
    }

    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.n[0];
        let j = (idx / self.n[0]) % self.n[1];
        let k = idx / (self.n[0] * self.n[1]);
        [i, j, k]
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    cells: Vec<Cell>,
    faces: Vec<Face>,
    /// Per cell: (neighbor cell, face index).
    adjacency: Vec<Vec<(usize, usize)>>,
    cartesian: Option<CartesianDims>,
}

/// Evaluates `|ε| nᵢ·K·(x_ε − xᵢ) / ‖x_ε − xᵢ‖²` for a diagonal `K`.
///
/// `outward_normal` is the unit normal of the face pointing away from the cell.
pub fn one_sided_transmissibility(
    cell: &Cell,
    face_center: [f64; 3],
    outward_normal: [f64; 3],
    area: f64,
) -> Result<f64> {
    let d = [
        face_center[0] - cell.center[0],
        face_center[1] - cell.center[1],
        face_center[2] - cell.center[2],
    ];
    let dist2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    if dist2 <= 0.0 || !dist2.is_finite() {
        return Err(Error::Geometry(
            "collocation point coincides with the cell barycenter".into(),
        ));
    }
    let nkd: f64 = (0..3).map(|a| outward_normal[a] * cell.perm[a] * d[a]).sum();
    Ok(area * nkd / dist2)
}

fn check_cell(idx: usize, c: &Cell) -> Result<()> {
    if !(c.volume > 0.0) {
        return Err(Error::InvalidProperty(format!("cell {idx}: volume must be > 0")));
    }
    if !(c.porosity > 0.0) {
        return Err(Error::InvalidProperty(format!("cell {idx}: porosity must be > 0")));
    }
    if c.perm.iter().any(|&k| !(k > 0.0) || !k.is_finite()) {
        return Err(Error::InvalidProperty(format!(
            "cell {idx}: permeability entries must be > 0"
        )));
    }
    Ok(())
}

/// Builds an `nx × ny × nz` Cartesian mesh. Cells are numbered
/// `i + nx (j + ny k)`; `perm` and `poro` follow the same ordering.
pub fn build_cartesian_mesh(
    n: [usize; 3],
    h: [f64; 3],
    perm: &[[f64; 3]],
    poro: &[f64],
) -> Result<Mesh> {
    if n.iter().any(|&c| c == 0) {
        return Err(Error::Dimension("cell counts must be positive".into()));
    }
    if h.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidProperty("cell spacing must be positive".into()));
    }
    let dims = CartesianDims { n, h };
    let nc = dims.cell_count();
    if perm.len() != nc || poro.len() != nc {
        return Err(Error::Dimension(format!(
            "expected {nc} permeability/porosity values, got {}/{}",
            perm.len(),
            poro.len()
        )));
    }
    let volume = h[0] * h[1] * h[2];
    let mut cells = Vec::with_capacity(nc);
    for idx in 0..nc {
        let [i, j, k] = dims.ijk(idx);
        let cell = Cell {
            volume,
            porosity: poro[idx],
            perm: perm[idx],
            center: [
                (i as f64 + 0.5) * h[0],
                (j as f64 + 0.5) * h[1],
                (k as f64 + 0.5) * h[2],
            ],
        };
        check_cell(idx, &cell)?;
        cells.push(cell);
    }

    let mut faces = Vec::new();
    for idx in 0..nc {
        let ijk = dims.ijk(idx);
        for axis in 0..3 {
            if ijk[axis] + 1 >= n[axis] {
                continue;
            }
            let mut nb = ijk;
            nb[axis] += 1;
            let other = dims.index(nb[0], nb[1], nb[2]);
            let area = match axis {
                0 => h[1] * h[2],
                1 => h[0] * h[2],
                _ => h[0] * h[1],
            };
            let mut center = cells[idx].center;
            center[axis] += 0.5 * h[axis];
            let mut normal = [0.0; 3];
            normal[axis] = 1.0;
            let neg = [-normal[0], -normal[1], -normal[2]];
            let trans_k = one_sided_transmissibility(&cells[idx], center, normal, area)?;
            let trans_l = one_sided_transmissibility(&cells[other], center, neg, area)?;
            faces.push(Face {
                k: idx,
                l: other,
                area,
                center: Some(center),
                trans_k,
                trans_l,
            });
        }
    }
    let mut mesh = Mesh::from_parts(cells, faces)?;
    mesh.cartesian = Some(dims);
    Ok(mesh)
}

impl Mesh {
    /// Assembles a mesh from explicit cells and faces, validating the
    /// face orientation and positivity invariants.
    pub fn from_parts(cells: Vec<Cell>, faces: Vec<Face>) -> Result<Self> {
        for (i, c) in cells.iter().enumerate() {
            check_cell(i, c)?;
        }
        let nc = cells.len();
        let mut adjacency = vec![Vec::new(); nc];
        let mut seen = std::collections::HashSet::new();
        for (fi, f) in faces.iter().enumerate() {
            if f.k >= f.l || f.l >= nc {
                return Err(Error::Dimension(format!(
                    "face {fi}: requires k < l < {nc}, got ({}, {})",
                    f.k, f.l
                )));
            }
            if !(f.area > 0.0) || !(f.trans_k > 0.0) || !(f.trans_l > 0.0) {
                return Err(Error::InvalidProperty(format!(
                    "face {fi}: area and transmissibilities must be > 0"
                )));
            }
            if !seen.insert((f.k, f.l)) {
                return Err(Error::Dimension(format!(
                    "duplicate face between cells {} and {}",
                    f.k, f.l
                )));
            }
            adjacency[f.k].push((f.l, fi));
            adjacency[f.l].push((f.k, fi));
        }
        Ok(Self {
            cells,
            faces,
            adjacency,
            cartesian: None,
        })
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn cartesian(&self) -> Option<&CartesianDims> {
        self.cartesian.as_ref()
    }

    /// Neighbors of a cell as `(neighbor, face)` pairs.
    pub fn neighbors(&self, cell: usize) -> &[(usize, usize)] {
        &self.adjacency[cell]
    }

    /// Stored one-sided transmissibility of `face` seen from `cell`.
    pub fn one_sided_transmissibility(&self, cell: usize, face: usize) -> Result<f64> {
        let f = &self.faces[face];
        if cell == f.k {
            Ok(f.trans_k)
        } else if cell == f.l {
            Ok(f.trans_l)
        } else {
            Err(Error::Geometry(format!("face {face} is not adjacent to cell {cell}")))
        }
    }

    pub fn total_volume(&self) -> f64 {
        self.cells.iter().map(|c| c.volume).sum()
    }

    pub fn total_pore_volume(&self) -> f64 {
        self.cells.iter().map(Cell::pore_volume).sum()
    }

    /// Cell-connectivity graph with unit edge weights.
    pub fn cell_graph(&self) -> ConnectivityGraph {
        let edges = self.faces.iter().map(|f| (f.k, f.l, 1)).collect();
        ConnectivityGraph::new(self.num_cells(), edges)
            .expect("mesh faces form a simple graph")
    }

    /// Writes the text mesh format: header `nc nf`, one line per cell
    /// `volume porosity kx ky kz cx cy cz`, one line per face `K L area TxK TxL`.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "{} {}", self.num_cells(), self.num_faces()).unwrap();
        for c in &self.cells {
            writeln!(
                s,
                "{:e} {:e} {:e} {:e} {:e} {:e} {:e} {:e}",
                c.volume, c.porosity, c.perm[0], c.perm[1], c.perm[2], c.center[0], c.center[1],
                c.center[2]
            )
            .unwrap();
        }
        for f in &self.faces {
            writeln!(s, "{} {} {:e} {:e} {:e}", f.k, f.l, f.area, f.trans_k, f.trans_l).unwrap();
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    /// Reads the text mesh format written by [`Mesh::write_text`]. Lines
    /// starting with `#` and blank lines are ignored.
    pub fn read_text<R: Read>(input: R) -> Result<Self> {
        let reader = BufReader::new(input);
        let mut tokens: Vec<Vec<String>> = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            tokens.push(t.split_whitespace().map(str::to_owned).collect());
        }
        let perr = |msg: String| Error::Parse {
            what: "mesh file".into(),
            msg,
        };
        let mut lines = tokens.into_iter();
        let header = lines.next().ok_or_else(|| perr("empty file".into()))?;
        if header.len() != 2 {
            return Err(perr("header must be `nc nf`".into()));
        }
        let nc: usize = header[0].parse().map_err(|e| perr(format!("nc: {e}")))?;
        let nf: usize = header[1].parse().map_err(|e| perr(format!("nf: {e}")))?;
        let num = |s: &str, line: usize| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| perr(format!("line {line}: {e}")))
        };
        let mut cells = Vec::with_capacity(nc);
        for i in 0..nc {
            let t = lines
                .next()
                .ok_or_else(|| perr(format!("missing cell line {i}")))?;
            if t.len() != 8 {
                return Err(perr(format!("cell line {i}: expected 8 values")));
            }
            let v: Vec<f64> = t.iter().map(|s| num(s, i + 2)).collect::<Result<_>>()?;
            cells.push(Cell {
                volume: v[0],
                porosity: v[1],
                perm: [v[2], v[3], v[4]],
                center: [v[5], v[6], v[7]],
            });
        }
        let mut faces = Vec::with_capacity(nf);
        for i in 0..nf {
            let t = lines
                .next()
                .ok_or_else(|| perr(format!("missing face line {i}")))?;
            if t.len() != 5 {
                return Err(perr(format!("face line {i}: expected 5 values")));
            }
            let a: usize = t[0].parse().map_err(|e| perr(format!("face {i}: {e}")))?;
            let b: usize = t[1].parse().map_err(|e| perr(format!("face {i}: {e}")))?;
            let (area, tk, tl) = (num(&t[2], i)?, num(&t[3], i)?, num(&t[4], i)?);
            // Accept either orientation on input; store with k < l.
            let (k, l, trans_k, trans_l) = if a < b { (a, b, tk, tl) } else { (b, a, tl, tk) };
            faces.push(Face {
                k,
                l,
                area,
                center: None,
                trans_k,
                trans_l,
            });
        }
        if lines.next().is_some() {
            return Err(perr("trailing data after face list".into()));
        }
        Self::from_parts(cells, faces)
    }
}

/// Undirected graph with positive integer edge weights, stored as a sorted
/// edge list plus a CSR-style adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectivityGraph {
    n: usize,
    edges: Vec<(usize, usize, u64)>,
    xadj: Vec<usize>,
    adj: Vec<(usize, u64)>,
}

impl ConnectivityGraph {
    /// Edges are normalized to `u < v`. Self-loops, duplicate edges and
    /// zero weights are rejected.
    pub fn new(n: usize, edges: Vec<(usize, usize, u64)>) -> Result<Self> {
        let mut norm: Vec<(usize, usize, u64)> = Vec::with_capacity(edges.len());
        for (u, v, w) in edges {
            if u == v {
                return Err(Error::Partition(format!("self-loop at vertex {u}")));
            }
            if u >= n || v >= n {
                return Err(Error::Partition(format!("edge ({u}, {v}) out of range")));
            }
            if w == 0 {
                return Err(Error::Partition(format!("edge ({u}, {v}) has zero weight")));
            }
            norm.push((u.min(v), u.max(v), w));
        }
        norm.sort_unstable();
        if norm.windows(2).any(|p| p[0].0 == p[1].0 && p[0].1 == p[1].1) {
            return Err(Error::Partition("duplicate edge".into()));
        }
        let mut deg = vec![0usize; n + 1];
        for &(u, v, _) in &norm {
            deg[u + 1] += 1;
            deg[v + 1] += 1;
        }
        for i in 0..n {
            deg[i + 1] += deg[i];
        }
        let mut adj = vec![(0, 0); deg[n]];
        let mut next = deg.clone();
        for &(u, v, w) in &norm {
            adj[next[u]] = (v, w);
            next[u] += 1;
            adj[next[v]] = (u, w);
            next[v] += 1;
        }
        for v in 0..n {
            adj[deg[v]..deg[v + 1]].sort_unstable();
        }
        Ok(Self {
            n,
            edges: norm,
            xadj: deg,
            adj,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize, u64)] {
        &self.edges
    }

    /// `(neighbor, weight)` pairs, sorted by neighbor.
    pub fn neighbors(&self, v: usize) -> &[(usize, u64)] {
        &self.adj[self.xadj[v]..self.xadj[v + 1]]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search_by_key(&v, |&(x, _)| x).is_ok()
    }

    /// Same topology with edge weights replaced by `f(u, v, w)`.
    pub fn reweighted(&self, mut f: impl FnMut(usize, usize, u64) -> u64) -> Self {
        let edges = self.edges.iter().map(|&(u, v, w)| (u, v, f(u, v, w))).collect();
        Self::new(self.n, edges).expect("reweighting keeps the graph simple")
    }
}

/// Cell graph extended with one vertex per well (numbered after the cells)
/// and one edge per perforation.
pub fn build_cell_well_graph(mesh: &Mesh, wells: &WellSet) -> Result<ConnectivityGraph> {
    let nc = mesh.num_cells();
    let mut edges: Vec<(usize, usize, u64)> = mesh.faces().iter().map(|f| (f.k, f.l, 1)).collect();
    for (wi, well) in wells.wells().iter().enumerate() {
        for p in &well.perforations {
            if p.cell >= nc {
                return Err(Error::Well(format!(
                    "well `{}` perforates nonexistent cell {}",
                    well.name, p.cell
                )));
            }
            edges.push((p.cell, nc + wi, 1));
        }
    }
    ConnectivityGraph::new(nc + wells.len(), edges)
}

//! Peaceman well model with one pressure unknown per well.
//!
//! Perforation fluxes are positive when fluid flows from the reservoir into
//! the wellbore (production). Rate-controlled wells inject the wetting phase;
//! pressure-controlled wells produce.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluid::FluidModel;
use crate::grid::Mesh;

pub const DEFAULT_WELLBORE_RADIUS: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Control {
    /// Bottom-hole pressure target, Pa. Producer.
    Bhp(f64),
    /// Injected wetting-phase rate, m³/s. Injector.
    Rate(f64),
}

impl Control {
    pub fn is_injector(&self) -> bool {
        matches!(self, Control::Rate(_))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Perforation {
    pub cell: usize,
    /// Well index, m³.
    pub wi: f64,
    /// Wellbore radius, m.
    pub r_w: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Well {
    pub name: String,
    pub control: Control,
    pub perforations: Vec<Perforation>,
}

/// Wells plus the flattened perforation ordering (well-major, perforations
/// in the order given) used by the perforation-flux block of the state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WellSet {
    wells: Vec<Well>,
    offsets: Vec<usize>,
}

impl WellSet {
    pub fn new(wells: Vec<Well>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(wells.len() + 1);
        offsets.push(0);
        for w in &wells {
            if w.perforations.is_empty() {
                return Err(Error::Well(format!("well `{}` has no perforations", w.name)));
            }
            let mut cells: Vec<usize> = w.perforations.iter().map(|p| p.cell).collect();
            cells.sort_unstable();
            if cells.windows(2).any(|c| c[0] == c[1]) {
                return Err(Error::Well(format!(
                    "well `{}` perforates the same cell twice",
                    w.name
                )));
            }
            if w.perforations.iter().any(|p| !(p.wi > 0.0) || !p.wi.is_finite()) {
                return Err(Error::Well(format!("well `{}`: well index must be > 0", w.name)));
            }
            match w.control {
                Control::Bhp(t) | Control::Rate(t) if !t.is_finite() => {
                    return Err(Error::Well(format!("well `{}`: non-finite target", w.name)));
                }
                Control::Rate(t) if t < 0.0 => {
                    return Err(Error::Well(format!(
                        "well `{}`: rate-controlled wells inject; target must be >= 0",
                        w.name
                    )));
                }
                _ => {}
            }
            offsets.push(offsets.last().unwrap() + w.perforations.len());
        }
        Ok(Self { wells, offsets })
    }

    pub fn empty() -> Self {
        Self {
            wells: Vec::new(),
            offsets: vec![0],
        }
    }

    pub fn wells(&self) -> &[Well] {
        &self.wells
    }

    pub fn len(&self) -> usize {
        self.wells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wells.is_empty()
    }

    pub fn num_perforations(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Global perforation index range owned by well `w`.
    pub fn perforation_range(&self, w: usize) -> std::ops::Range<usize> {
        self.offsets[w]..self.offsets[w + 1]
    }

    /// `(well, perforation)` in global perforation order.
    pub fn perforations(&self) -> impl Iterator<Item = (usize, &Perforation)> + '_ {
        self.wells
            .iter()
            .enumerate()
            .flat_map(|(wi, w)| w.perforations.iter().map(move |p| (wi, p)))
    }

    /// Sum of injection-rate targets.
    pub fn total_injection_rate(&self) -> f64 {
        self.wells
            .iter()
            .map(|w| match w.control {
                Control::Rate(q) => q,
                Control::Bhp(_) => 0.0,
            })
            .sum()
    }

    pub fn has_bhp_well(&self) -> bool {
        self.wells.iter().any(|w| !w.control.is_injector())
    }

    /// Cells perforated by each well.
    pub fn well_cells(&self) -> Vec<Vec<usize>> {
        self.wells
            .iter()
            .map(|w| w.perforations.iter().map(|p| p.cell).collect())
            .collect()
    }
}

/// Peaceman index of a vertical well in a rectangular cell.
pub fn peaceman_well_index(
    dx: f64,
    dy: f64,
    dz: f64,
    kx: f64,
    ky: f64,
    r_w: f64,
    skin: f64,
) -> Result<f64> {
    if !(dx > 0.0 && dy > 0.0 && dz > 0.0) {
        return Err(Error::InvalidProperty("cell extents must be > 0".into()));
    }
    if !(kx > 0.0 && ky > 0.0) {
        return Err(Error::InvalidProperty("horizontal permeability must be > 0".into()));
    }
    let r_o = peaceman_equivalent_radius(dx, dy, kx, ky);
    if r_o <= r_w {
        return Err(Error::Well(format!(
            "equivalent radius {r_o} does not exceed wellbore radius {r_w}"
        )));
    }
    let denom = (r_o / r_w).ln() + skin;
    if !(denom > 0.0) {
        return Err(Error::Well("non-positive log term in well index".into()));
    }
    Ok(2.0 * std::f64::consts::PI * (kx * ky).sqrt() * dz / denom)
}

/// Peaceman equivalent radius `r_o` for anisotropic horizontal permeability.
pub fn peaceman_equivalent_radius(dx: f64, dy: f64, kx: f64, ky: f64) -> f64 {
    let a = (ky / kx).sqrt();
    let b = (kx / ky).sqrt();
    0.28 * (a * dx * dx + b * dy * dy).sqrt() / ((ky / kx).powf(0.25) + (kx / ky).powf(0.25))
}

/// Well description as it appears in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellSpec {
    pub name: String,
    pub control: ControlKind,
    pub target: f64,
    /// Perforated cell indices.
    #[serde(default)]
    pub perforations: Vec<usize>,
    /// Perforate every layer of the column `(i, j)` of a Cartesian mesh.
    #[serde(default)]
    pub column: Option<[usize; 2]>,
    #[serde(default = "default_rw")]
    pub r_w: f64,
    #[serde(default)]
    pub skin: f64,
    #[serde(default)]
    pub wi_override: Option<Vec<f64>>,
}

fn default_rw() -> f64 {
    DEFAULT_WELLBORE_RADIUS
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlKind {
    Bhp,
    Rate,
}

impl WellSpec {
    /// Resolves perforated cells and well indices against a mesh. Cartesian
    /// meshes use the cell extents; other meshes assume a cube of the cell
    /// volume unless `wi_override` is given.
    pub fn build(&self, mesh: &Mesh) -> Result<Well> {
        let mut cells = self.perforations.clone();
        if let Some([i, j]) = self.column {
            let dims = mesh.cartesian().ok_or_else(|| {
                Error::Well(format!("well `{}`: `column` needs a Cartesian mesh", self.name))
            })?;
            if i >= dims.n[0] || j >= dims.n[1] {
                return Err(Error::Well(format!("well `{}`: column out of range", self.name)));
            }
            cells.extend((0..dims.n[2]).map(|k| dims.index(i, j, k)));
        }
        if let Some(&bad) = cells.iter().find(|&&c| c >= mesh.num_cells()) {
            return Err(Error::Well(format!(
                "well `{}` perforates nonexistent cell {bad}",
                self.name
            )));
        }
        if let Some(wi) = &self.wi_override {
            if wi.len() != cells.len() {
                return Err(Error::Well(format!(
                    "well `{}`: wi_override has {} entries for {} perforations",
                    self.name,
                    wi.len(),
                    cells.len()
                )));
            }
        }
        let mut perforations = Vec::with_capacity(cells.len());
        for (n, &cell) in cells.iter().enumerate() {
            let wi = match &self.wi_override {
                Some(v) => v[n],
                None => {
                    let c = &mesh.cells()[cell];
                    let [dx, dy, dz] = match mesh.cartesian() {
                        Some(d) => d.h,
                        None => [c.volume.cbrt(); 3],
                    };
                    peaceman_well_index(dx, dy, dz, c.perm[0], c.perm[1], self.r_w, self.skin)?
                }
            };
            perforations.push(Perforation {
                cell,
                wi,
                r_w: self.r_w,
            });
        }
        let control = match self.control {
            ControlKind::Bhp => Control::Bhp(self.target),
            ControlKind::Rate => Control::Rate(self.target),
        };
        Ok(Well {
            name: self.name.clone(),
            control,
            perforations,
        })
    }
}

/// Per-perforation flux residuals `σᵢ/(λ(s_K) WIᵢ) − (p_K − p^w)` of one
/// well, in Pa. `sigma_w` holds the well's own perforation fluxes.
pub fn perforation_residuals(
    well: &Well,
    fluid: &FluidModel,
    sigma_w: &[f64],
    p_cell: &[f64],
    p_well: f64,
    s: &[f64],
) -> Vec<f64> {
    assert_eq!(sigma_w.len(), well.perforations.len());
    well.perforations
        .iter()
        .zip(sigma_w)
        .map(|(p, &q)| {
            let lam = fluid.total_mobility(s[p.cell]);
            q / (lam * p.wi) - (p_cell[p.cell] - p_well)
        })
        .collect()
}

/// Control equation residual: `p^w − target` for pressure control and
/// `−Σ σᵢ − target` for rate control.
pub fn control_residual(well: &Well, sigma_w: &[f64], p_well: f64) -> f64 {
    match well.control {
        Control::Bhp(t) => p_well - t,
        Control::Rate(t) => -sigma_w.iter().sum::<f64>() - t,
    }
}

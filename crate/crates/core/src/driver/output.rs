//! Step reports (CSV), cell fields (legacy VTK) and run metadata (JSON).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Mesh;

/// One attempted time step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// Index of the time step; retries of a step share it.
    pub step: usize,
    /// Step length, s.
    pub dt: f64,
    /// Largest cell CFL number of the final iterate.
    #[serde(rename = "CFL")]
    pub cfl: f64,
    pub nonlinear_iter: usize,
    pub linear_iter: usize,
    /// Wall-clock time of the nonlinear solve, s.
    pub step_time: f64,
    pub converged: bool,
}

pub const CSV_HEADER: &str = "step,dt,CFL,nonlinear_iter,linear_iter,step_time,converged";

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            what: "step report CSV".into(),
            msg: format!("{other:?}"),
        },
    }
}

pub fn write_reports_csv<W: Write>(out: W, reports: &[StepReport]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
    for r in reports {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_reports_csv<R: std::io::Read>(input: R) -> Result<Vec<StepReport>> {
    let mut rd = csv::Reader::from_reader(input);
    rd.deserialize().map(|r| r.map_err(csv_err)).collect()
}

/// Legacy ASCII VTK with cell fields. Cartesian meshes are written as
/// structured points; other meshes as one vertex per cell centroid.
pub fn write_vtk<W: Write>(mut out: W, mesh: &Mesh, fields: &[(&str, &[f64])]) -> Result<()> {
    let nc = mesh.num_cells();
    for (name, v) in fields {
        if v.len() != nc {
            return Err(Error::Dimension(format!("field `{name}` has {} values", v.len())));
        }
    }
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "wellfas cell fields")?;
    writeln!(out, "ASCII")?;
    if let Some(d) = mesh.cartesian() {
        writeln!(out, "DATASET STRUCTURED_POINTS")?;
        writeln!(out, "DIMENSIONS {} {} {}", d.n[0] + 1, d.n[1] + 1, d.n[2] + 1)?;
        writeln!(out, "ORIGIN 0 0 0")?;
        writeln!(out, "SPACING {} {} {}", d.h[0], d.h[1], d.h[2])?;
    } else {
        writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(out, "POINTS {nc} double")?;
        for c in mesh.cells() {
            writeln!(out, "{:e} {:e} {:e}", c.center[0], c.center[1], c.center[2])?;
        }
        writeln!(out, "CELLS {nc} {}", 2 * nc)?;
        for i in 0..nc {
            writeln!(out, "1 {i}")?;
        }
        writeln!(out, "CELL_TYPES {nc}")?;
        for _ in 0..nc {
            writeln!(out, "1")?;
        }
    }
    writeln!(out, "CELL_DATA {nc}")?;
    for (name, v) in fields {
        writeln!(out, "SCALARS {name} double 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for x in v.iter() {
            writeln!(out, "{x:e}")?;
        }
    }
    Ok(())
}

/// Facts about a run needed to interpret its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub solver: String,
    pub linear_solver: String,
    pub levels_requested: usize,
    pub levels_built: usize,
    pub cells_per_level: Vec<usize>,
    pub seed: u64,
    pub tolerance: f64,
    /// Norm used by the convergence test.
    pub residual_norm: String,
    pub convergence_test: String,
    /// Unit in which the configuration gave times.
    pub time_unit: String,
    /// Seconds per configured time unit.
    pub seconds_per_unit: f64,
    pub first_dt_seconds: f64,
    pub simulated_seconds: f64,
    pub simulated_pvi: Option<f64>,
    pub steps_attempted: usize,
    pub steps_converged: usize,
    pub total_nonlinear_iterations: usize,
    pub total_solve_seconds: f64,
}

pub fn write_metadata(path: &Path, meta: &RunMetadata) -> Result<()> {
    let text = serde_json::to_string_pretty(meta).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

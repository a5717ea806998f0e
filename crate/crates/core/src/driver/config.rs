//! Simulation configuration as read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fas::{CycleConfig, NonlinearConfig, SolverKind};
use crate::fluid::FluidModel;
use crate::hierarchy::HierarchyParams;
use crate::linsolve::{LinearConfig, LinearKind};
use crate::wells::WellSpec;

use super::case::LognormalSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub mesh: MeshConfig,
    #[serde(default)]
    pub fluid: FluidModel,
    #[serde(default)]
    pub wells: Vec<WellSpec>,
    pub time: TimeConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeshConfig {
    /// Layered lognormal permeability on a Cartesian grid.
    Lognormal(LognormalSpec),
    /// Homogeneous Cartesian grid.
    Cartesian {
        n: [usize; 3],
        h: [f64; 3],
        permeability: f64,
        porosity: f64,
    },
    /// Mesh in the plain-text format of [`crate::grid::Mesh::read_text`];
    /// relative paths resolve against the configuration file.
    File { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    #[default]
    Seconds,
    /// Pore volumes injected: total pore volume over total injection rate.
    Pvi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// First step length in `unit`.
    #[serde(default)]
    pub dt0: Option<f64>,
    /// Alternative to `dt0`: choose the first step so that the largest
    /// cell CFL number of the initial flux field equals this value.
    #[serde(default)]
    pub initial_cfl: Option<f64>,
    #[serde(default)]
    pub unit: TimeUnit,
    /// Step growth factor between consecutive steps.
    #[serde(default = "default_ramp")]
    pub ramp: f64,
    /// Simulated end time in `unit`; the last step is shortened to hit it.
    #[serde(default)]
    pub final_time: Option<f64>,
    #[serde(default)]
    pub max_steps: Option<usize>,
}

fn default_ramp() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Step halvings attempted after a failed step.
    pub max_retries: usize,
    pub levels: usize,
    pub coarsening_factor: f64,
    pub well_layers: usize,
    pub well_edge_scale: f64,
    pub seed: u64,
    pub theta: f64,
    pub max_backtrack: usize,
    pub alpha: f64,
    pub linear: LinearKind,
    pub lin_rtol: f64,
    pub lin_maxiter: usize,
    pub lin_restart: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let h = HierarchyParams::default();
        let c = CycleConfig::default();
        let n = NonlinearConfig::default();
        Self {
            kind: n.solver,
            tolerance: c.tolerance,
            max_iterations: n.max_iterations,
            max_retries: 3,
            levels: h.levels,
            coarsening_factor: h.coarsening_factor,
            well_layers: h.well_layers,
            well_edge_scale: h.well_edge_scale,
            seed: h.seed,
            theta: c.theta,
            max_backtrack: c.max_backtrack,
            alpha: c.alpha,
            linear: c.linear.kind,
            lin_rtol: c.linear.rtol,
            lin_maxiter: c.linear.max_iter,
            lin_restart: c.linear.restart,
        }
    }
}

impl SolverConfig {
    /// Levels actually requested: plain Newton always runs on one level.
    pub fn hierarchy_params(&self) -> HierarchyParams {
        HierarchyParams {
            levels: if self.kind == SolverKind::Newton { 1 } else { self.levels },
            coarsening_factor: self.coarsening_factor,
            well_layers: self.well_layers,
            well_edge_scale: self.well_edge_scale,
            seed: self.seed,
        }
    }

    pub fn nonlinear(&self) -> NonlinearConfig {
        NonlinearConfig {
            solver: self.kind,
            max_iterations: self.max_iterations,
            cycle: CycleConfig {
                theta: self.theta,
                max_backtrack: self.max_backtrack,
                alpha: self.alpha,
                tolerance: self.tolerance,
                linear: LinearConfig {
                    kind: self.linear,
                    rtol: self.lin_rtol,
                    max_iter: self.lin_maxiter,
                    restart: self.lin_restart,
                },
                ..CycleConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub csv: String,
    pub vtk: String,
    pub metadata: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            csv: "steps.csv".into(),
            vtk: "final.vtk".into(),
            metadata: "metadata.json".into(),
        }
    }
}

impl SimulationConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            what: "configuration".into(),
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a configuration file; a relative mesh path is taken relative to
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let MeshConfig::File { path: mesh } = &mut cfg.mesh {
            if mesh.is_relative() {
                if let Some(dir) = path.parent() {
                    *mesh = dir.join(&*mesh);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.time;
        match (t.dt0, t.initial_cfl) {
            (Some(dt), None) if dt > 0.0 && dt.is_finite() => {}
            (None, Some(c)) if c > 0.0 && c.is_finite() => {}
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::Config(
                    "time needs exactly one of `dt0` and `initial_cfl`".into(),
                ))
            }
            _ => return Err(Error::Config("time.dt0 and time.initial_cfl must be > 0".into())),
        }
        if !(t.ramp > 1.0 && t.ramp.is_finite()) {
            return Err(Error::Config("time.ramp must be > 1".into()));
        }
        match (t.final_time, t.max_steps) {
            (None, None) => {
                return Err(Error::Config(
                    "time needs `final_time`, `max_steps` or both".into(),
                ))
            }
            (Some(tf), _) if !(tf > 0.0) => {
                return Err(Error::Config("time.final_time must be > 0".into()))
            }
            _ => {}
        }
        let s = &self.solver;
        if s.levels == 0 {
            return Err(Error::Config("solver.levels must be >= 1".into()));
        }
        if s.max_iterations == 0 {
            return Err(Error::Config("solver.max_iterations must be >= 1".into()));
        }
        self.solver.nonlinear().cycle.validate()?;
        self.fluid.validate()?;
        Ok(())
    }
}

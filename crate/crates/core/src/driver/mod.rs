//! Time stepping, case setup and output files.
//!
//! Each step starts from the previous converged state and grows the step by
//! the ramp factor; a step that fails to converge is retried with half the
//! length, a bounded number of times.

pub mod case;
pub mod config;
pub mod output;

use std::path::Path;
use std::time::Instant;

use crate::assembly::{LevelSystem, StepTerms};
use crate::error::{Error, Result};
use crate::fas::{solve_step, SolverKind};
use crate::grid::{build_cartesian_mesh, Mesh};
use crate::hierarchy::{Hierarchy, HierarchyParams};
use crate::wells::{Control, WellSet};

pub use case::{desk_case, generate_lognormal_case, LognormalSpec};
pub use config::{MeshConfig, SimulationConfig, SolverConfig, TimeConfig, TimeUnit};
pub use output::{RunMetadata, StepReport};

pub fn build_mesh(cfg: &MeshConfig) -> Result<Mesh> {
    match cfg {
        MeshConfig::Lognormal(spec) => Ok(generate_lognormal_case(spec)?.0),
        MeshConfig::Cartesian {
            n,
            h,
            permeability,
            porosity,
        } => {
            let nc = n.iter().product();
            build_cartesian_mesh(*n, *h, &vec![[*permeability; 3]; nc], &vec![*porosity; nc])
        }
        MeshConfig::File { path } => {
            let file = std::fs::File::open(path)?;
            Mesh::read_text(file)
        }
    }
}

pub fn build_wells(cfg: &SimulationConfig, mesh: &Mesh) -> Result<WellSet> {
    let wells = cfg
        .wells
        .iter()
        .map(|w| w.build(mesh))
        .collect::<Result<Vec<_>>>()?;
    WellSet::new(wells)
}

/// Seconds per configured time unit.
pub fn seconds_per_unit(unit: TimeUnit, mesh: &Mesh, wells: &WellSet) -> Result<f64> {
    match unit {
        TimeUnit::Seconds => Ok(1.0),
        TimeUnit::Pvi => {
            let q = wells.total_injection_rate();
            if !(q > 0.0) {
                return Err(Error::Config("PVI time needs a positive injection rate".into()));
            }
            Ok(mesh.total_pore_volume() / q)
        }
    }
}

/// Everything a run produces besides files.
#[derive(Clone, Debug)]
pub struct SimulationResult {
    pub reports: Vec<StepReport>,
    /// Final fine-level state.
    pub state: Vec<f64>,
    /// Converged state after every accepted step.
    pub history: Vec<Vec<f64>>,
    pub metadata: RunMetadata,
}

/// A configured simulation, ready to run.
pub struct Simulation {
    pub config: SimulationConfig,
    pub mesh: Mesh,
    pub wells: WellSet,
    pub hierarchy: Hierarchy,
    seconds_per_unit: f64,
}

impl Simulation {
    pub fn new(config: SimulationConfig) -> Result<Self> {
        config.validate()?;
        let mesh = build_mesh(&config.mesh)?;
        let wells = build_wells(&config, &mesh)?;
        if !wells.has_bhp_well() {
            return Err(Error::Config(
                "at least one pressure-controlled well is needed to fix the pressure level".into(),
            ));
        }
        let seconds_per_unit = seconds_per_unit(config.time.unit, &mesh, &wells)?;
        let fine = LevelSystem::fine(&mesh, &wells, config.fluid)?;
        let hierarchy = Hierarchy::build(fine, &config.solver.hierarchy_params())?;
        Ok(Self {
            config,
            mesh,
            wells,
            hierarchy,
            seconds_per_unit,
        })
    }

    pub fn fine(&self) -> &LevelSystem {
        &self.hierarchy.fine
    }

    /// Rest state at the pressure of the first pressure-controlled well.
    pub fn initial_state(&self) -> Vec<f64> {
        let p0 = self
            .wells
            .wells()
            .iter()
            .find_map(|w| match w.control {
                Control::Bhp(p) => Some(p),
                Control::Rate(_) => None,
            })
            .expect("checked at construction");
        self.fine().initial_state(p0)
    }

    pub fn run(&self) -> Result<SimulationResult> {
        self.run_with(|_| {})
    }

    /// Length in seconds of the first step. With `initial_cfl`, the initial
    /// flux field comes from a single-level solve over one second, during
    /// which saturations barely move.
    pub fn first_step_seconds(&self) -> Result<f64> {
        let time = &self.config.time;
        if let Some(dt0) = time.dt0 {
            return Ok(dt0 * self.seconds_per_unit);
        }
        let target = time.initial_cfl.expect("validated");
        let fine = self.fine();
        let single = Hierarchy::build(fine.clone(), &HierarchyParams {
            levels: 1,
            ..HierarchyParams::default()
        })?;
        let mut nl = self.config.solver.nonlinear();
        nl.solver = SolverKind::Newton;
        let mut x = self.initial_state();
        let probe = 1.0;
        let st = StepTerms::new(fine, &x[fine.layout.s()], probe)?;
        let stats = solve_step(&single, &st, &mut x, &nl)?;
        if !stats.converged {
            return Err(Error::Nonlinear("initial flux field did not converge".into()));
        }
        let per_second = fine.cfl_number(&x, probe) / probe;
        if !(per_second > 0.0) {
            return Err(Error::Config("initial_cfl needs a nonzero initial flux field".into()));
        }
        Ok(target / per_second)
    }

    /// Runs to the configured end, calling `observe` after every attempt.
    pub fn run_with(&self, mut observe: impl FnMut(&StepReport)) -> Result<SimulationResult> {
        let cfg = &self.config;
        let fine = self.fine();
        let lay = fine.layout;
        let nl = cfg.solver.nonlinear();
        let slope = fine.fluid.max_fractional_flow_derivative();
        let final_time = cfg.time.final_time.map(|t| t * self.seconds_per_unit);

        let mut x = self.initial_state();
        let mut reports = Vec::new();
        let mut history = Vec::new();
        let mut t = 0.0;
        let first_dt = self.first_step_seconds()?;
        let mut dt = first_dt;
        let mut step = 0;
        let mut solve_seconds = 0.0;
        loop {
            if cfg.time.max_steps.is_some_and(|m| step >= m) {
                break;
            }
            if let Some(tf) = final_time {
                if t >= tf * (1.0 - 1e-12) {
                    break;
                }
                dt = dt.min(tf - t);
            }
            let mut dt_try = dt;
            let mut accepted = None;
            for _ in 0..=cfg.solver.max_retries {
                let st = StepTerms::new(fine, &x[lay.s()], dt_try)?;
                let mut xt = x.clone();
                let start = Instant::now();
                let stats = solve_step(&self.hierarchy, &st, &mut xt, &nl)?;
                let elapsed = start.elapsed().as_secs_f64();
                solve_seconds += elapsed;
                let cfl = if xt.iter().all(|v| v.is_finite()) {
                    fine.cfl_number_with_slope(&xt, dt_try, slope)
                } else {
                    f64::NAN
                };
                let report = StepReport {
                    step,
                    dt: dt_try,
                    cfl,
                    nonlinear_iter: stats.iterations,
                    linear_iter: stats.linear_iterations,
                    step_time: elapsed,
                    converged: stats.converged,
                };
                observe(&report);
                reports.push(report);
                if stats.converged {
                    accepted = Some(xt);
                    break;
                }
                dt_try *= 0.5;
            }
            match accepted {
                Some(xt) => {
                    x = xt;
                    history.push(x.clone());
                    t += dt_try;
                    step += 1;
                    dt = dt_try * cfg.time.ramp;
                }
                None => {
                    return Err(Error::Nonlinear(format!(
                        "step {step} failed after {} retries (last dt = {:e} s)",
                        cfg.solver.max_retries,
                        dt_try * 2.0
                    )))
                }
            }
        }

        let metadata = RunMetadata {
            solver: match cfg.solver.kind {
                SolverKind::Fas => "fas".into(),
                SolverKind::Newton => "newton".into(),
            },
            linear_solver: format!("{:?}", cfg.solver.linear).to_lowercase(),
            levels_requested: cfg.solver.hierarchy_params().levels,
            levels_built: self.hierarchy.num_levels(),
            cells_per_level: (0..self.hierarchy.num_levels())
                .map(|l| self.hierarchy.system(l).layout.nc)
                .collect(),
            seed: cfg.solver.seed,
            tolerance: cfg.solver.tolerance,
            residual_norm: "block-scaled l2: flux rows by lambda_ref/(c*q_ref), conservation \
                            and rate rows by 1/q_ref, pressure rows by 1/max(|target|,1), \
                            transport rows by dt/pore_volume"
                .into(),
            convergence_test: "scaled norm <= tol (absolute) or <= tol * initial norm".into(),
            time_unit: match cfg.time.unit {
                TimeUnit::Seconds => "seconds".into(),
                TimeUnit::Pvi => "pvi".into(),
            },
            seconds_per_unit: self.seconds_per_unit,
            first_dt_seconds: first_dt,
            simulated_seconds: t,
            simulated_pvi: {
                let q = self.wells.total_injection_rate();
                (q > 0.0).then(|| t * q / self.mesh.total_pore_volume())
            },
            steps_attempted: reports.len(),
            steps_converged: step,
            total_nonlinear_iterations: reports.iter().map(|r| r.nonlinear_iter).sum(),
            total_solve_seconds: solve_seconds,
        };
        Ok(SimulationResult {
            reports,
            state: x,
            history,
            metadata,
        })
    }

    /// Writes the CSV, the final-state VTK and the metadata into `dir`.
    pub fn write_outputs(&self, dir: &Path, result: &SimulationResult) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let out = &self.config.output;
        let csv = std::fs::File::create(dir.join(&out.csv))?;
        output::write_reports_csv(std::io::BufWriter::new(csv), &result.reports)?;
        let lay = self.fine().layout;
        let vtk = std::fs::File::create(dir.join(&out.vtk))?;
        output::write_vtk(
            std::io::BufWriter::new(vtk),
            &self.mesh,
            &[
                ("pressure", &result.state[lay.p_r()]),
                ("saturation", &result.state[lay.s()]),
            ],
        )?;
        output::write_metadata(&dir.join(&out.metadata), &result.metadata)
    }
}

/// Builds, runs and writes a simulation in one call.
pub fn run_simulation(config: SimulationConfig) -> Result<SimulationResult> {
    let sim = Simulation::new(config)?;
    let result = sim.run()?;
    let dir = sim.config.output.dir.clone();
    sim.write_outputs(&dir, &result)?;
    Ok(result)
}

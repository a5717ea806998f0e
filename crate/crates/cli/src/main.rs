//! `wellfas` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wellfas::driver::{Simulation, SimulationConfig};
use wellfas::fas::SolverKind;
use wellfas::linsolve::LinearKind;

#[derive(Parser)]
#[command(name = "wellfas", version, about = "Two-phase reservoir simulation with well-aware FAS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation described by a TOML configuration file.
    Simulate(SimulateArgs),
}

/// Options given here override the configuration file.
#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    solver: Option<SolverKind>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    coarsening_factor: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    well_layers: Option<usize>,
    #[arg(long)]
    well_edge_scale: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    max_backtrack: Option<usize>,
    #[arg(long)]
    alpha_split: Option<f64>,
    #[arg(long)]
    linear: Option<LinearKind>,
    #[arg(long)]
    lin_rtol: Option<f64>,
    #[arg(long)]
    lin_maxiter: Option<usize>,
    /// Suppress the per-step progress lines.
    #[arg(long, short)]
    quiet: bool,
}

impl SimulateArgs {
    fn apply(&self, cfg: &mut SimulationConfig) {
        let s = &mut cfg.solver;
        macro_rules! set {
            ($($arg:ident => $field:ident),*) => {
                $(if let Some(v) = self.$arg.clone() { s.$field = v; })*
            };
        }
        set!(
            solver => kind,
            levels => levels,
            coarsening_factor => coarsening_factor,
            seed => seed,
            well_layers => well_layers,
            well_edge_scale => well_edge_scale,
            theta => theta,
            max_backtrack => max_backtrack,
            alpha_split => alpha,
            linear => linear,
            lin_rtol => lin_rtol,
            lin_maxiter => lin_maxiter
        );
        if let Some(dir) = &self.out {
            cfg.output.dir = dir.clone();
        }
    }
}

fn simulate(args: &SimulateArgs) -> wellfas::Result<()> {
    let mut cfg = SimulationConfig::from_file(&args.config)?;
    args.apply(&mut cfg);
    cfg.validate()?;
    let sim = Simulation::new(cfg)?;
    let cells: Vec<String> = (0..sim.hierarchy.num_levels())
        .map(|l| sim.hierarchy.system(l).layout.nc.to_string())
        .collect();
    if !args.quiet {
        eprintln!("levels: {} cells", cells.join(" / "));
    }
    let quiet = args.quiet;
    let result = sim.run_with(|r| {
        if !quiet {
            eprintln!(
                "step {:>3}  dt {:>10.4e} s  CFL {:>9.3}  nonlinear {:>3}  linear {:>5}  {:>7.3} s  {}",
                r.step,
                r.dt,
                r.cfl,
                r.nonlinear_iter,
                r.linear_iter,
                r.step_time,
                if r.converged { "ok" } else { "FAILED" }
            );
        }
    })?;
    let dir = sim.config.output.dir.clone();
    sim.write_outputs(&dir, &result)?;
    if !quiet {
        eprintln!(
            "{} steps, {} nonlinear iterations, {:.2} s solving; outputs in {}",
            result.metadata.steps_converged,
            result.metadata.total_nonlinear_iterations,
            result.metadata.total_solve_seconds,
            dir.display()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(args) => simulate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

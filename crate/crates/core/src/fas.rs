//! Full Approximation Scheme V-cycle and the outer nonlinear iteration.
//!
//! One cycle at level `ℓ` for `r(x) = b`: Newton pre-smoothing, projection
//! of the state `x_c = Q x`, the τ-corrected coarse right-hand side
//! `b_c = r_c(x_c) − R (r(x) − b)`, a recursive coarse solve, a backtracked
//! prolongated correction `P (y_c − x_c)`, and Newton post-smoothing. The
//! coarsest level is only smoothed, with several Newton iterations.

use serde::{Deserialize, Serialize};

use crate::assembly::{chop_saturation, scaled_norm, LevelSystem, StepTerms};
use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;
use crate::linsolve::LinearConfig;
use crate::smoother::{newton_smooth, Reduction, SmoothSettings};

/// Nonlinear solver selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Fas,
    Newton,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fas" => Ok(Self::Fas),
            "newton" => Ok(Self::Newton),
            _ => Err(Error::Config(format!("unknown solver `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CycleConfig {
    pub pre_smooth: usize,
    pub post_smooth: usize,
    /// Newton iteration cap on the coarsest level.
    pub coarse_iterations: usize,
    /// Step reduction factor of the backtracking.
    pub theta: f64,
    pub max_backtrack: usize,
    /// Weight of the well-side copy in the split perforation equation.
    pub alpha: f64,
    pub tolerance: f64,
    pub linear: LinearConfig,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self {
            pre_smooth: 1,
            post_smooth: 1,
            coarse_iterations: 10,
            theta: 0.5,
            max_backtrack: 4,
            alpha: 0.5,
            tolerance: 1e-6,
            linear: LinearConfig::default(),
        }
    }
}

impl CycleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Config("theta must lie in (0, 1)".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config("alpha split must lie in (0, 1)".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("nonlinear tolerance must be > 0".into()));
        }
        if self.coarse_iterations == 0 {
            return Err(Error::Config("coarse iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Counters accumulated over cycles.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CycleStats {
    pub linear_iterations: usize,
    pub accepted_corrections: usize,
    pub rejected_corrections: usize,
    pub coarse_failures: usize,
}

/// `r(x) − b`.
pub fn defect(sys: &LevelSystem, step: &StepTerms, x: &[f64], b: Option<&[f64]>) -> Vec<f64> {
    let mut r = sys.residual(x, step);
    if let Some(b) = b {
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri -= bi;
        }
    }
    r
}

/// Outcome of a backtracking search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Backtrack {
    /// Accepted after `halvings` reductions, with the resulting norm.
    Accepted { halvings: usize, norm: f64 },
    Rejected,
}

/// Replaces `x` by `x + θʲ dx` for the smallest `j ≤ max_halvings` whose
/// residual norm does not exceed the current one; leaves `x` unchanged when
/// no such `j` exists. `norm` evaluates `‖r(·) − b‖`, `chop` post-processes
/// trial states.
pub fn backtracking<N, C>(
    x: &mut [f64],
    dx: &[f64],
    theta: f64,
    max_halvings: usize,
    norm: N,
    chop: C,
) -> Backtrack
where
    N: Fn(&[f64]) -> f64,
    C: Fn(&mut [f64]),
{
    let n0 = norm(x);
    if dx.iter().all(|&v| v == 0.0) {
        return Backtrack::Accepted { halvings: 0, norm: n0 };
    }
    let mut step = 1.0;
    let mut trial = vec![0.0; x.len()];
    for j in 0..=max_halvings {
        for ((t, &xi), &d) in trial.iter_mut().zip(x.iter()).zip(dx) {
            *t = xi + step * d;
        }
        chop(&mut trial);
        let nj = norm(&trial);
        if nj.is_finite() && nj <= n0 {
            x.copy_from_slice(&trial);
            return Backtrack::Accepted { halvings: j, norm: nj };
        }
        step *= theta;
    }
    Backtrack::Rejected
}

/// Nonlinear multigrid driver bound to one hierarchy and one time step.
pub struct Fas<'a> {
    pub hierarchy: &'a Hierarchy,
    pub steps: Vec<StepTerms>,
    weights: Vec<Vec<f64>>,
    pub config: &'a CycleConfig,
}

impl<'a> Fas<'a> {
    pub fn new(hierarchy: &'a Hierarchy, fine_step: &StepTerms, config: &'a CycleConfig) -> Self {
        let steps = hierarchy.step_terms(fine_step);
        let weights = (0..hierarchy.num_levels())
            .map(|l| hierarchy.system(l).residual_scaling(fine_step.dt))
            .collect();
        Self {
            hierarchy,
            steps,
            weights,
            config,
        }
    }

    /// Scaled residual norm on level `l`.
    pub fn norm(&self, l: usize, x: &[f64], b: Option<&[f64]>) -> f64 {
        let sys = self.hierarchy.system(l);
        scaled_norm(&defect(sys, &self.steps[l], x, b), &self.weights[l])
    }

    fn settings(&self, l: usize, tolerance: Option<f64>) -> SmoothSettings<'a> {
        SmoothSettings {
            reduction: if l == 0 {
                Reduction::Primal
            } else {
                Reduction::Hybrid {
                    alpha: self.config.alpha,
                }
            },
            linear: &self.config.linear,
            chop: l == 0,
            tolerance,
        }
    }

    fn smooth(
        &self,
        l: usize,
        x: &mut [f64],
        b: Option<&[f64]>,
        n: usize,
        tolerance: Option<f64>,
        stats: &mut CycleStats,
    ) -> Result<()> {
        let sys = self.hierarchy.system(l);
        let s = newton_smooth(sys, &self.steps[l], x, b, n, &self.settings(l, tolerance))?;
        stats.linear_iterations += s.linear_iterations;
        Ok(())
    }

    /// One V-cycle on level `l` for `r(x) = b` (`b = None` means zero).
    pub fn cycle(
        &self,
        l: usize,
        x: &mut [f64],
        b: Option<&[f64]>,
        stats: &mut CycleStats,
    ) -> Result<()> {
        let cfg = self.config;
        let coarsest = l + 1 == self.hierarchy.num_levels();
        if coarsest {
            return self.smooth(l, x, b, cfg.coarse_iterations, Some(cfg.tolerance), stats);
        }
        self.smooth(l, x, b, cfg.pre_smooth, None, stats)?;

        let sys = self.hierarchy.system(l);
        let lv = &self.hierarchy.levels[l];
        let xc = lv.project(x);
        let rc = lv.restrict(&defect(sys, &self.steps[l], x, b));
        let mut bc = lv.system.residual(&xc, &self.steps[l + 1]);
        for (v, r) in bc.iter_mut().zip(&rc) {
            *v -= r;
        }
        let mut yc = xc.clone();
        match self.cycle(l + 1, &mut yc, Some(&bc), stats) {
            Ok(()) => {
                for (y, x0) in yc.iter_mut().zip(&xc) {
                    *y -= x0;
                }
                let dx = lv.interpolate(&yc);
                let layout = sys.layout;
                let outcome = backtracking(
                    x,
                    &dx,
                    cfg.theta,
                    cfg.max_backtrack,
                    |t| self.norm(l, t, b),
                    |t| {
                        if l == 0 {
                            chop_saturation(&layout, t)
                        }
                    },
                );
                match outcome {
                    Backtrack::Accepted { .. } => stats.accepted_corrections += 1,
                    Backtrack::Rejected => stats.rejected_corrections += 1,
                }
            }
            // A failed coarse solve only forfeits the correction.
            Err(_) => stats.coarse_failures += 1,
        }
        self.smooth(l, x, b, cfg.post_smooth, None, stats)
    }
}

/// Settings of the outer nonlinear loop of one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct NonlinearConfig {
    pub solver: SolverKind,
    pub max_iterations: usize,
    pub cycle: CycleConfig,
}

impl Default for NonlinearConfig {
    fn default() -> Self {
        Self {
            solver: SolverKind::Fas,
            max_iterations: 50,
            cycle: CycleConfig::default(),
        }
    }
}

/// Result of the outer nonlinear loop.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NonlinearStats {
    pub converged: bool,
    pub iterations: usize,
    pub linear_iterations: usize,
    /// Scaled residual norm before each iteration and after the last.
    pub history: Vec<f64>,
    pub cycle: CycleStats,
    /// Why the iteration stopped early, if it did.
    pub failure: Option<String>,
}

/// Solves one time step in place. Convergence: scaled residual norm below
/// the tolerance, either absolutely or relative to the initial norm. Plain
/// Newton (with saturation chopping) is used when requested or when the
/// hierarchy has a single level. Solver failures end the iteration and are
/// reported in the returned statistics; only invalid settings are errors.
pub fn solve_step(
    hierarchy: &Hierarchy,
    fine_step: &StepTerms,
    x: &mut [f64],
    config: &NonlinearConfig,
) -> Result<NonlinearStats> {
    config.cycle.validate()?;
    let fas = Fas::new(hierarchy, fine_step, &config.cycle);
    let tol = config.cycle.tolerance;
    let mut stats = NonlinearStats::default();
    let n0 = fas.norm(0, x, None);
    stats.history.push(n0);
    let done = |n: f64| n <= tol || n <= tol * n0;
    if done(n0) {
        stats.converged = true;
        return Ok(stats);
    }
    let use_fas = config.solver == SolverKind::Fas && hierarchy.num_levels() > 1;
    for _ in 0..config.max_iterations {
        let outcome = if use_fas {
            fas.cycle(0, x, None, &mut stats.cycle)
        } else {
            fas.smooth(0, x, None, 1, None, &mut stats.cycle)
        };
        stats.iterations += 1;
        if let Err(e) = outcome {
            stats.failure = Some(e.to_string());
            break;
        }
        let n = fas.norm(0, x, None);
        stats.history.push(n);
        if !n.is_finite() {
            stats.failure = Some("residual became non-finite".into());
            break;
        }
        if done(n) {
            stats.converged = true;
            break;
        }
    }
    if !stats.converged && stats.failure.is_none() {
        stats.failure = Some(format!(
            "no convergence in {} iterations",
            config.max_iterations
        ));
    }
    stats.linear_iterations = stats.cycle.linear_iterations;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_correction_is_kept() {
        let mut x = vec![1.0, 2.0];
        let out = backtracking(&mut x, &[0.0, 0.0], 0.5, 4, |t| t[0].abs(), |_| {});
        assert_eq!(out, Backtrack::Accepted { halvings: 0, norm: 1.0 });
        assert_eq!(x, vec![1.0, 2.0]);
    }

    #[test]
    fn overshooting_step_is_halved_once() {
        // |x² − 1| from x = 2 (value 3) with a step of −4.5.
        let r = |t: &[f64]| (t[0] * t[0] - 1.0).abs();
        let mut x = vec![2.0];
        let out = backtracking(&mut x, &[-4.5], 0.5, 4, r, |_| {});
        // x − 4.5 = −2.5 → 5.25 > 3; x − 2.25 = −0.25 → 0.9375 ≤ 3.
        assert_eq!(out, Backtrack::Accepted { halvings: 1, norm: 0.9375 });
        assert_eq!(x, vec![-0.25]);
    }

    #[test]
    fn hopeless_step_is_rejected() {
        let mut x = vec![0.0];
        let out = backtracking(&mut x, &[1.0], 0.5, 2, |t| t[0].abs(), |_| {});
        assert_eq!(out, Backtrack::Rejected);
        assert_eq!(x, vec![0.0]);
    }
}

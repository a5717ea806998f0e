mod common;

use proptest::prelude::*;
use wellfas::assembly::{LevelSystem, StepTerms};
use wellfas::fas::{
    backtracking, defect, solve_step, Backtrack, CycleConfig, CycleStats, Fas, NonlinearConfig,
    SolverKind,
};
use wellfas::fluid::FluidModel;
use wellfas::grid::build_cartesian_mesh;
use wellfas::hierarchy::{Hierarchy, HierarchyParams};
use wellfas::linsolve::{LinearConfig, LinearKind};
use wellfas::wells::ControlKind;

use common::*;

fn config() -> CycleConfig {
    CycleConfig {
        linear: LinearConfig {
            kind: LinearKind::Direct,
            ..LinearConfig::default()
        },
        ..CycleConfig::default()
    }
}

/// 1D channel between two pressure-controlled wells with nothing but the
/// nonwetting phase present: the problem is linear in fluxes and pressures.
fn channel() -> Hierarchy {
    let n = 32;
    let mesh = build_cartesian_mesh([n, 1, 1], [2.0; 3], &vec![[1e-13; 3]; n], &vec![0.2; n]).unwrap();
    let wells = well_set(
        &mesh,
        &[
            spec("high", ControlKind::Bhp, P0 + 1e5, &[0]),
            spec("low", ControlKind::Bhp, P0, &[n - 1]),
        ],
    );
    let sys = LevelSystem::fine(&mesh, &wells, FluidModel::default()).unwrap();
    Hierarchy::build(
        sys,
        &HierarchyParams {
            levels: 2,
            coarsening_factor: 4.0,
            well_layers: 1,
            ..HierarchyParams::default()
        },
    )
    .unwrap()
}

#[test]
fn two_level_cycles_on_linear_diffusion() {
    let h = channel();
    assert_eq!(h.num_levels(), 2);
    let cfg = config();
    let st = StepTerms::new(&h.fine, &vec![0.0; h.fine.layout.nc], 1e4).unwrap();
    let fas = Fas::new(&h, &st, &cfg);
    let mut x = h.fine.initial_state(P0);
    let mut norms = vec![fas.norm(0, &x, None)];
    let mut stats = CycleStats::default();
    for _ in 0..3 {
        fas.cycle(0, &mut x, None, &mut stats).unwrap();
        norms.push(fas.norm(0, &x, None));
    }
    let floor = 1e-12 * norms[0];
    for w in norms.windows(2) {
        assert!(w[1] <= w[0] || w[1] <= floor, "{norms:?}");
    }
    assert!(norms[3] <= floor, "{norms:?}");
    assert!(x[h.fine.layout.s()].iter().all(|&s| s == 0.0));
    // The linear problem is solved by a single Newton step as well.
    let mut y = h.fine.initial_state(P0);
    let one = NonlinearConfig {
        solver: SolverKind::Newton,
        max_iterations: 1,
        cycle: cfg.clone(),
    };
    let single = Hierarchy::build(h.fine.clone(), &HierarchyParams { levels: 1, ..HierarchyParams::default() }).unwrap();
    let stats = solve_step(&single, &st, &mut y, &one).unwrap();
    assert!(stats.converged);
    assert!(stats.history[1] <= 1e-12 * stats.history[0]);
}

#[test]
fn cycle_is_a_fixed_point_at_a_root() {
    let h = hierarchy(two_well_system([6, 6, 1], 4), 3, 4.0);
    let cfg = config();
    let mut r = rng(4);
    let st = random_steps(&h.fine, &mut r);
    let fas = Fas::new(&h, &st, &cfg);
    let x0 = random_state(&h.fine, &mut r);
    let b = h.fine.residual(&x0, &fas.steps[0]);
    let mut x = x0.clone();
    let mut stats = CycleStats::default();
    fas.cycle(0, &mut x, Some(&b), &mut stats).unwrap();
    assert_eq!(x, x0);
}

#[test]
fn single_level_fas_is_newton() {
    let sys = two_well_system([4, 4, 1], 6);
    let h = hierarchy(sys, 1, 4.0);
    let st = StepTerms::new(&h.fine, &vec![0.0; h.fine.layout.nc], 1e5).unwrap();
    let run = |solver| {
        let mut x = h.fine.initial_state(P0);
        let cfg = NonlinearConfig {
            solver,
            cycle: config(),
            ..NonlinearConfig::default()
        };
        let stats = solve_step(&h, &st, &mut x, &cfg).unwrap();
        (x, stats.history, stats.converged)
    };
    let (xa, ha, ca) = run(SolverKind::Fas);
    let (xb, hb, cb) = run(SolverKind::Newton);
    assert!(ca && cb);
    assert_eq!(xa, xb);
    assert_eq!(ha, hb);
}

#[test]
fn fas_solves_a_two_phase_step() {
    let h = hierarchy(four_well_system(7), 3, 8.0);
    let st = StepTerms::new(&h.fine, &vec![0.0; h.fine.layout.nc], 5e5).unwrap();
    let mut x = h.fine.initial_state(P0);
    let cfg = NonlinearConfig {
        cycle: config(),
        ..NonlinearConfig::default()
    };
    let stats = solve_step(&h, &st, &mut x, &cfg).unwrap();
    assert!(stats.converged, "{:?}", stats.failure);
    assert!(stats.cycle.accepted_corrections > 0);
    assert!(x[h.fine.layout.s()].iter().all(|s| (0.0..=1.0).contains(s)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn tau_correction_is_consistent(seed in 0u64..10_000) {
        let h = hierarchy(two_well_system([6, 5, 2], seed), 3, 4.0);
        let mut r = rng(seed);
        let steps = h.step_terms(&random_steps(&h.fine, &mut r));
        for (l, lv) in h.levels.iter().enumerate() {
            let sys = h.system(l);
            let x = random_state(sys, &mut r);
            let b = sys.residual(&random_state(sys, &mut r), &steps[l]);
            let xc = lv.project(&x);
            let restricted = lv.restrict(&defect(sys, &steps[l], &x, Some(&b)));
            let rc = lv.system.residual(&xc, &steps[l + 1]);
            let bc: Vec<f64> = rc.iter().zip(&restricted).map(|(a, d)| a - d).collect();
            let lhs = defect(&lv.system, &steps[l + 1], &xc, Some(&bc));
            prop_assert!(block_rel_diff(&lv.system, &lhs, &restricted) <= 1e-12);
        }
    }

    #[test]
    fn backtracking_never_increases_the_norm(seed in 0u64..10_000, scale in -3.0f64..1.0) {
        let sys = two_well_system([4, 3, 1], seed);
        let h = hierarchy(sys, 1, 4.0);
        let cfg = config();
        let mut r = rng(seed);
        let st = random_steps(&h.fine, &mut r);
        let fas = Fas::new(&h, &st, &cfg);
        let x0 = random_state(&h.fine, &mut r);
        let target = random_state(&h.fine, &mut r);
        let dx: Vec<f64> = target.iter().zip(&x0).map(|(t, x)| 10f64.powf(scale) * (t - x)).collect();
        let mut x = x0.clone();
        let n0 = fas.norm(0, &x, None);
        let lay = h.fine.layout;
        let out = backtracking(&mut x, &dx, 0.5, 4, |t| fas.norm(0, t, None), |t| {
            wellfas::assembly::chop_saturation(&lay, t)
        });
        let n1 = fas.norm(0, &x, None);
        prop_assert!(n1 <= n0);
        match out {
            Backtrack::Accepted { norm, halvings } => {
                prop_assert_eq!(norm, n1);
                prop_assert!(halvings <= 4);
            }
            Backtrack::Rejected => prop_assert_eq!(&x, &x0),
        }
    }
}

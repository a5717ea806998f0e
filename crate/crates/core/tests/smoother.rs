mod common;

use proptest::prelude::*;
use wellfas::assembly::{LevelSystem, StepTerms};
use wellfas::fluid::FluidModel;
use wellfas::grid::build_cartesian_mesh;
use wellfas::hierarchy::{Hierarchy, HierarchyParams};
use wellfas::linsolve::{direct_solve, LinearConfig, LinearKind};
use wellfas::smoother::{
    condense_hybrid, continuity_defect, hybridize, newton_smooth, newton_update,
    reduce_fine_jacobian, Reduction, SmoothSettings,
};
use wellfas::wells::{ControlKind, WellSet};

use common::*;

fn direct() -> LinearConfig {
    LinearConfig {
        kind: LinearKind::Direct,
        ..LinearConfig::default()
    }
}

/// Two-level hierarchy of a 4×4×1 case with an injector and a producer in
/// opposite corners.
fn two_level(seed: u64) -> Hierarchy {
    let h = Hierarchy::build(
        two_well_system([4, 4, 1], seed),
        &HierarchyParams {
            levels: 2,
            coarsening_factor: 4.0,
            well_layers: 1,
            ..HierarchyParams::default()
        },
    )
    .unwrap();
    assert_eq!(h.num_levels(), 2);
    assert!(h.levels[0].system.layout.nc >= 2);
    h
}

/// Newton update from a dense-free direct solve of the unreduced system.
fn direct_update(sys: &LevelSystem, st: &StepTerms, x: &[f64], b: &[f64]) -> Vec<f64> {
    let r = sys.residual(x, st);
    let rhs: Vec<f64> = r.iter().zip(b).map(|(r, b)| -(r - b)).collect();
    direct_solve(&sys.jacobian(x, st), &rhs).unwrap()
}

fn coarse_setup(seed: u64) -> (Hierarchy, StepTerms, Vec<f64>, Vec<f64>) {
    let h = two_level(seed);
    let mut r = rng(seed);
    let st = h.step_terms(&random_steps(&h.fine, &mut r)).pop().unwrap();
    let sys = &h.levels[0].system;
    let x = random_state(sys, &mut r);
    let b = random_state(sys, &mut r).iter().map(|v| 1e-3 * v).collect();
    (h, st, x, b)
}

#[test]
fn hybrid_update_matches_direct_solve() {
    for seed in 0..5 {
        let (h, st, x, b) = coarse_setup(seed);
        let sys = &h.levels[0].system;
        let oracle = direct_update(sys, &st, &x, &b);
        let (dx, _) =
            newton_update(sys, &st, &x, Some(&b), Reduction::Hybrid { alpha: 0.5 }, &direct()).unwrap();
        let err = block_rel_diff(sys, &dx, &oracle);
        assert!(err <= 1e-10, "seed {seed}: {err:e}");
    }
}

#[test]
fn hybrid_copies_agree_and_reduced_size() {
    let (h, st, x, _) = coarse_setup(11);
    let sys = &h.levels[0].system;
    let lay = sys.layout;
    let rhs: Vec<f64> = sys.residual(&x, &st).iter().map(|v| -v).collect();
    let hy = hybridize(sys, &x, &sys.jacobian(&x, &st), &rhs, 0.3).unwrap();
    let (cond, s, g) = condense_hybrid(sys, &hy).unwrap();
    assert_eq!(s.nrows(), lay.nf + lay.np + lay.nc);
    assert_eq!(s.ncols(), s.nrows());
    assert_eq!(cond.num_kept(), s.nrows());
    let full = cond.back_substitute(&direct_solve(&s, &g).unwrap());
    assert!(continuity_defect(sys, &hy.layout, &full) <= 1e-12);
}

#[test]
fn primal_update_matches_direct_solve_and_size() {
    let sys = two_well_system([4, 4, 1], 3);
    let lay = sys.layout;
    let mut r = rng(3);
    let x = random_state(&sys, &mut r);
    let st = random_steps(&sys, &mut r);
    let b = vec![0.0; lay.len()];
    let rhs: Vec<f64> = sys.residual(&x, &st).iter().map(|v| -v).collect();
    let (_, s, _) = reduce_fine_jacobian(&sys, &sys.jacobian(&x, &st), &rhs).unwrap();
    assert_eq!((s.nrows(), s.ncols()), (2 * lay.nc + lay.nw, 2 * lay.nc + lay.nw));
    let (dx, _) = newton_update(&sys, &st, &x, None, Reduction::Primal, &direct()).unwrap();
    assert!(block_rel_diff(&sys, &dx, &direct_update(&sys, &st, &x, &b)) <= 1e-10);
}

#[test]
fn single_cell_with_pressure_well_reduces_by_hand() {
    let mesh = build_cartesian_mesh([1, 1, 1], [2.0; 3], &[[1e-13; 3]], &[0.25]).unwrap();
    let wells = well_set(&mesh, &[spec("p", ControlKind::Bhp, P0, &[0])]);
    let sys = LevelSystem::fine(&mesh, &wells, FluidModel::default()).unwrap();
    let mut x = sys.initial_state(P0);
    x[sys.layout.s()][0] = 0.4;
    let st = StepTerms::new(&sys, &[0.2], 50.0).unwrap();
    x[sys.layout.p_r()][0] = P0 + 10.0;
    let rhs: Vec<f64> = sys.residual(&x, &st).iter().map(|v| -v).collect();
    let (_, s, g) = reduce_fine_jacobian(&sys, &sys.jacobian(&x, &st), &rhs).unwrap();
    // Unknowns after reduction: (p, p^w, s). With σ = 0 the perforation row
    // is (c/λ) Δσ − Δp + Δp^w = g_σ, so Δσ = (λ/c)(g_σ + Δp − Δp^w).
    let p = sys.perfs[0];
    let lam = sys.fluid.total_mobility(0.4);
    let m = lam / p.c;
    let f = sys.fluid.fractional_flow(0.4);
    let w = sys.pore_volume[0] / st.dt;
    let expect = [
        [m, -m, 0.0],
        [0.0, 1.0, 0.0],
        [f * m, -f * m, w],
    ];
    let dense = s.to_dense();
    for i in 0..3 {
        for j in 0..3 {
            let e = expect[i][j];
            assert!((dense[i][j] - e).abs() <= 1e-12 * e.abs().max(1.0), "({i},{j})");
        }
    }
    let g_sigma = rhs[0];
    let expect_g = [rhs[1] - m * g_sigma, rhs[2], rhs[3] - f * m * g_sigma];
    for (a, e) in g.iter().zip(expect_g) {
        assert!((a - e).abs() <= 1e-12 * e.abs().max(1e-30));
    }
}

#[test]
fn without_wells_the_pressure_block_is_the_tpfa_matrix() {
    let mesh = random_mesh([3, 2, 1], 8);
    let sys = LevelSystem::fine(&mesh, &WellSet::empty(), FluidModel::default()).unwrap();
    let lay = sys.layout;
    let mut r = rng(8);
    let x = random_state(&sys, &mut r);
    let st = random_steps(&sys, &mut r);
    let rhs = vec![0.0; lay.len()];
    let (_, s, _) = reduce_fine_jacobian(&sys, &sys.jacobian(&x, &st), &rhs).unwrap();
    assert_eq!(s.nrows(), 2 * lay.nc);
    let sat = &x[lay.s()];
    let mut tpfa = vec![vec![0.0; lay.nc]; lay.nc];
    for f in &sys.faces {
        let t = 1.0 / (f.ck / sys.fluid.total_mobility(sat[f.k]) + f.cl / sys.fluid.total_mobility(sat[f.l]));
        tpfa[f.k][f.k] += t;
        tpfa[f.l][f.l] += t;
        tpfa[f.k][f.l] -= t;
        tpfa[f.l][f.k] -= t;
    }
    let dense = s.to_dense();
    for i in 0..lay.nc {
        for j in 0..lay.nc {
            let e = tpfa[i][j];
            assert!((dense[i][j] - e).abs() <= 1e-12 * tpfa[i][i].abs(), "({i},{j})");
        }
    }
}

#[test]
fn update_vanishes_at_a_root() {
    let (h, st, x, _) = coarse_setup(4);
    let sys = &h.levels[0].system;
    let b = sys.residual(&x, &st);
    let (dx, _) = newton_update(sys, &st, &x, Some(&b), Reduction::Hybrid { alpha: 0.5 }, &direct()).unwrap();
    assert!(dx.iter().all(|&v| v == 0.0));
}

#[test]
fn newton_converges_quadratically_near_a_root() {
    let sys = two_well_system([3, 3, 1], 21);
    let lay = sys.layout;
    let st = StepTerms::new(&sys, &vec![0.0; lay.nc], 2e5).unwrap();
    let lin = direct();
    let settings = SmoothSettings {
        reduction: Reduction::Primal,
        linear: &lin,
        chop: true,
        tolerance: None,
    };
    let mut root = sys.initial_state(P0);
    newton_smooth(&sys, &st, &mut root, None, 30, &settings).unwrap();
    let w = sys.residual_scaling(st.dt);
    let n = wellfas::assembly::scaled_norm(&sys.residual(&root, &st), &w);
    assert!(n < 1e-12, "no root: {n:e}");
    let err = |x: &[f64]| {
        let q = injection_total(&sys);
        let mut e = 0.0f64;
        for i in 0..lay.len() {
            let scale = if i < lay.p_r().start { q } else if i < lay.s().start { P0 } else { 1.0 };
            e = e.max((x[i] - root[i]).abs() / scale);
        }
        e
    };
    let mut x = root.clone();
    let mut r = rng(21);
    for v in &mut x[lay.s()] {
        if *v > 0.05 {
            *v += 0.02 * (rand::Rng::random_range(&mut r, -1.0..1.0));
        }
    }
    let mut errors = vec![err(&x)];
    for _ in 0..3 {
        newton_smooth(&sys, &st, &mut x, None, 1, &settings).unwrap();
        errors.push(err(&x));
    }
    // e_{k+1} ≤ C e_k² with a modest constant, until round-off.
    for k in 0..3 {
        assert!(errors[k + 1] <= (10.0 * errors[k] * errors[k]).max(1e-14), "{errors:?}");
    }
    assert!(errors[3] < 1e-10, "{errors:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn hybrid_equals_direct_for_any_split(seed in 0u64..10_000, alpha in 0.05f64..0.95) {
        let (h, st, x, b) = coarse_setup(seed);
        let sys = &h.levels[0].system;
        let oracle = direct_update(sys, &st, &x, &b);
        let (dx, _) = newton_update(sys, &st, &x, Some(&b), Reduction::Hybrid { alpha }, &direct()).unwrap();
        prop_assert!(block_rel_diff(sys, &dx, &oracle) <= 1e-10);

        let rhs: Vec<f64> = sys.residual(&x, &st).iter().zip(&b).map(|(r, b)| b - r).collect();
        let hy = hybridize(sys, &x, &sys.jacobian(&x, &st), &rhs, alpha).unwrap();
        let (cond, s, g) = condense_hybrid(sys, &hy).unwrap();
        let full = cond.back_substitute(&direct_solve(&s, &g).unwrap());
        prop_assert!(continuity_defect(sys, &hy.layout, &full) <= 1e-12);
    }
}

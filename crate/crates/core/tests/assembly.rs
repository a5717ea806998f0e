mod common;

use proptest::prelude::*;
use wellfas::assembly::{LevelSystem, StepTerms};
use wellfas::fluid::FluidModel;
use wellfas::grid::build_cartesian_mesh;
use wellfas::wells::{Control, WellSet};

use common::*;

fn two_cells(fluid: FluidModel) -> LevelSystem {
    let mesh = build_cartesian_mesh([2, 1, 1], [1.0; 3], &[[1.0; 3]; 2], &[0.2; 2]).unwrap();
    LevelSystem::fine(&mesh, &WellSet::empty(), fluid).unwrap()
}

#[test]
fn transport_takes_the_upstream_cell() {
    let fluid = FluidModel::default();
    let sys = two_cells(fluid);
    let lay = sys.layout;
    let mut x = vec![0.0; lay.len()];
    x[0] = 1.0;
    x[lay.s()].copy_from_slice(&[0.3, 0.7]);
    // Previous saturation equal to the current one removes accumulation.
    let step = StepTerms::new(&sys, &[0.3, 0.7], 1.0).unwrap();
    let r = sys.residual(&x, &step);
    let f = fluid.fractional_flow(0.3);
    assert!((r[lay.s().start] - f).abs() < 1e-15);
    assert!((r[lay.s().start + 1] + f).abs() < 1e-15);
    x[0] = -1.0;
    let r = sys.residual(&x, &step);
    assert!((r[lay.s().start] + fluid.fractional_flow(0.7)).abs() < 1e-15);
}

#[test]
fn flux_row_diagonal_is_the_mobility_weighted_resistance() {
    let sys = two_well_system([3, 3, 1], 5);
    let mut r = rng(5);
    let x = random_state(&sys, &mut r);
    let st = random_steps(&sys, &mut r);
    let j = sys.jacobian(&x, &st);
    let s = &x[sys.layout.s()];
    for (e, f) in sys.faces.iter().enumerate() {
        let expect = f.ck / sys.fluid.total_mobility(s[f.k]) + f.cl / sys.fluid.total_mobility(s[f.l]);
        assert!((j.get(e, e) - expect).abs() <= 1e-14 * expect);
    }
    for (w, c) in sys.controls.iter().enumerate() {
        let row = sys.layout.p_w().start + w;
        if let Control::Bhp(_) = c {
            assert_eq!(j.get(row, row), 1.0);
        }
    }
}

#[test]
fn incidence_columns_telescope() {
    let sys = four_well_system(3);
    let (drr, drw, dww) = sys.incidence();
    for e in 0..sys.layout.nf {
        let s: f64 = (0..sys.layout.nc).map(|k| drr.get(k, e)).sum();
        assert_eq!(s, 0.0);
        let nonzeros = (0..sys.layout.nc).filter(|&k| drr.get(k, e) != 0.0).count();
        assert_eq!(nonzeros, 2);
    }
    for (i, p) in sys.perfs.iter().enumerate() {
        let s: f64 = (0..sys.layout.nc).map(|k| drw.get(k, i)).sum::<f64>()
            + (0..sys.layout.nw).map(|w| dww.get(w, i)).sum::<f64>();
        match sys.controls[p.well] {
            Control::Rate(_) => assert_eq!(s, 0.0),
            Control::Bhp(_) => assert_eq!(s, 1.0),
        }
    }
}

#[test]
fn jacobian_respects_block_structure() {
    let sys = two_well_system([4, 4, 2], 9);
    let lay = sys.layout;
    let mut r = rng(9);
    let x = random_state(&sys, &mut r);
    let st = random_steps(&sys, &mut r);
    let j = sys.jacobian(&x, &st);
    let block = |i: usize| -> usize {
        [lay.sigma_r(), lay.sigma_w(), lay.p_r(), lay.p_w(), lay.s()]
            .iter()
            .position(|rg| rg.contains(&i))
            .unwrap()
    };
    // Allowed (row block, column block) pairs.
    let allowed = [
        (0, 0), (0, 2), (0, 4),
        (1, 1), (1, 2), (1, 3), (1, 4),
        (2, 0), (2, 1),
        (3, 1), (3, 3),
        (4, 0), (4, 1), (4, 4),
    ];
    for (row, col, v) in j.iter() {
        if v != 0.0 {
            assert!(allowed.contains(&(block(row), block(col))), "entry ({row}, {col})");
        }
    }
    for e in lay.sigma_r() {
        for e2 in lay.sigma_r() {
            if e != e2 {
                assert_eq!(j.get(e, e2), 0.0);
            }
        }
    }
}

#[test]
fn cfl_scales_with_the_step() {
    let sys = two_well_system([3, 3, 1], 2);
    let lay = sys.layout;
    let rest = sys.initial_state(P0);
    assert_eq!(sys.cfl_number(&rest, 100.0), 0.0);
    let mut r = rng(2);
    let x = random_state(&sys, &mut r);
    let a = sys.cfl_number(&x, 100.0);
    let b = sys.cfl_number(&x, 200.0);
    assert!(a > 0.0);
    assert!((b - 2.0 * a).abs() <= 1e-14 * b);
    assert_eq!(lay.len(), x.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn analytic_jacobian_matches_finite_differences(seed in 0u64..10_000, big in proptest::bool::ANY) {
        let n = if big { [4, 4, 2] } else { [3, 3, 1] };
        let sys = two_well_system(n, seed);
        let mut r = rng(seed);
        let x = random_state(&sys, &mut r);
        let st = random_steps(&sys, &mut r);
        prop_assert!(jacobian_error(&sys, &x, &st) <= 1e-6);
    }

    #[test]
    fn residual_is_deterministic(seed in 0u64..10_000) {
        let sys = two_well_system([3, 3, 1], seed);
        let mut r = rng(seed);
        let x = random_state(&sys, &mut r);
        let st = random_steps(&sys, &mut r);
        let a = sys.residual(&x, &st);
        let b = sys.residual(&x, &st);
        prop_assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
}

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use wellfas::assembly::LevelSystem;
use wellfas::hierarchy::Hierarchy;

use common::*;

/// Largest block-wise relative mismatch of `r_c(x_c)` against `R r(P x_c)`
/// between levels `l` and `l + 1`.
fn galerkin_mismatch(h: &Hierarchy, l: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let fine = h.system(l);
    let lv = &h.levels[l];
    let st0 = random_steps(&h.fine, &mut r);
    let steps = h.step_terms(&st0);
    let xc = random_state(&lv.system, &mut r);
    let rc = lv.system.residual(&xc, &steps[l + 1]);
    let composed = lv.restrict(&fine.residual(&lv.interpolate(&xc), &steps[l]));
    block_rel_diff(&lv.system, &rc, &composed)
}

fn assert_exact_identity(h: &Hierarchy) {
    for lv in &h.levels {
        let qp = lv.q.matmul(&lv.p);
        let n = qp.nrows();
        assert_eq!(n, qp.ncols());
        assert_eq!(n, lv.system.layout.len());
        for (i, j, v) in qp.iter() {
            assert_eq!(v, if i == j { 1.0 } else { 0.0 }, "QP[{i}][{j}]");
        }
        for i in 0..n {
            assert_eq!(qp.get(i, i), 1.0);
        }
        assert_eq!(lv.r.to_dense(), lv.p.transpose().to_dense());
    }
}

#[test]
fn single_level_hierarchy_is_empty() {
    let h = hierarchy(two_well_system([3, 3, 1], 0), 1, 4.0);
    assert_eq!(h.num_levels(), 1);
    assert!(h.levels.is_empty());
}

#[test]
fn projection_is_a_left_inverse_of_interpolation() {
    let h = hierarchy(four_well_system(1), 3, 8.0);
    assert!(h.num_levels() >= 2);
    assert_exact_identity(&h);
}

#[test]
fn galerkin_identity_on_the_four_well_case() {
    let h = hierarchy(four_well_system(2), 3, 8.0);
    for l in 0..h.levels.len() {
        for seed in 0..20 {
            let m = galerkin_mismatch(&h, l, seed);
            assert!(m <= 1e-12, "level {l}, seed {seed}: {m:e}");
        }
    }
}

#[test]
fn levels_are_nested_and_wells_survive() {
    let h = hierarchy(four_well_system(3), 3, 8.0);
    for (l, lv) in h.levels.iter().enumerate() {
        let fine: &LevelSystem = h.system(l);
        let coarse = &lv.system;
        assert_eq!(coarse.layout.nw, fine.layout.nw);
        assert_eq!(coarse.controls, fine.controls);
        // Each coarse cell is a union of finer cells.
        let used: BTreeSet<usize> = lv.aggregate_of.iter().copied().collect();
        assert_eq!(used.len(), coarse.layout.nc);
        // Face bundles partition the finer faces between different aggregates.
        let mut seen = vec![0usize; fine.layout.nf];
        for (c, bundle) in lv.face_bundles.iter().enumerate() {
            assert!(!bundle.is_empty());
            let cf = coarse.faces[c];
            for &(e, sign) in bundle {
                seen[e] += 1;
                let f = fine.faces[e];
                let (a, b) = (lv.aggregate_of[f.k], lv.aggregate_of[f.l]);
                let oriented = if sign > 0.0 { (a, b) } else { (b, a) };
                assert_eq!(oriented, (cf.k, cf.l));
            }
        }
        for (e, f) in fine.faces.iter().enumerate() {
            let interface = lv.aggregate_of[f.k] != lv.aggregate_of[f.l];
            assert_eq!(seen[e], usize::from(interface), "face {e}");
        }
        let mut perf_seen = vec![0usize; fine.layout.np];
        for (c, bundle) in lv.perf_bundles.iter().enumerate() {
            assert!(!bundle.is_empty());
            for &i in bundle {
                perf_seen[i] += 1;
                assert_eq!(fine.perfs[i].well, coarse.perfs[c].well);
                assert_eq!(lv.aggregate_of[fine.perfs[i].cell], coarse.perfs[c].cell);
            }
        }
        assert!(perf_seen.iter().all(|&n| n == 1));
        // Coarse faces are oriented from lower to higher aggregate id.
        assert!(coarse.faces.iter().all(|f| f.k < f.l));
    }
}

#[test]
fn coarse_conservation_and_control_rows() {
    let h = hierarchy(four_well_system(4), 2, 8.0);
    let lv = &h.levels[0];
    let mut r = rng(4);
    let st = random_steps(&h.fine, &mut r);
    let steps = h.step_terms(&st);
    let xc = random_state(&lv.system, &mut r);
    let xf = lv.interpolate(&xc);
    let rf = h.fine.residual(&xf, &steps[0]);
    let rc = lv.system.residual(&xc, &steps[1]);
    let (fl, cl) = (h.fine.layout, lv.system.layout);
    let mut summed = vec![0.0; cl.nc];
    for (k, &a) in lv.aggregate_of.iter().enumerate() {
        summed[a] += rf[fl.p_r().start + k];
    }
    assert!(rel_diff(&rc[cl.p_r()], &summed) <= 1e-12);
    assert_eq!(&rc[cl.p_w()], &rf[fl.p_w()]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn operator_identities_on_random_cases(seed in 0u64..10_000, nx in 5usize..10, ny in 5usize..10) {
        let h = hierarchy(two_well_system([nx, ny, 2], seed), 3, 4.0);
        assert_exact_identity(&h);
        for l in 0..h.levels.len() {
            prop_assert!(galerkin_mismatch(&h, l, seed) <= 1e-12);
        }
    }
}

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wellfas::assembly::{LevelSystem, StepTerms};
use wellfas::fluid::FluidModel;
use wellfas::grid::{build_cartesian_mesh, Mesh};
use wellfas::hierarchy::{Hierarchy, HierarchyParams};
use wellfas::wells::{Control, ControlKind, WellSet, WellSpec, DEFAULT_WELLBORE_RADIUS};

pub const P0: f64 = 1.0e6;
pub const Q: f64 = 1.0e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Cartesian mesh with log-uniform permeability over two decades.
pub fn random_mesh(n: [usize; 3], seed: u64) -> Mesh {
    let mut r = rng(seed);
    let nc = n[0] * n[1] * n[2];
    let perm: Vec<[f64; 3]> = (0..nc)
        .map(|_| {
            let k = 1e-13 * 10f64.powf(r.random_range(-1.0..1.0));
            [k, k, 0.5 * k]
        })
        .collect();
    let poro: Vec<f64> = (0..nc).map(|_| r.random_range(0.1..0.3)).collect();
    build_cartesian_mesh(n, [4.0, 4.0, 2.0], &perm, &poro).unwrap()
}

pub fn spec(name: &str, control: ControlKind, target: f64, cells: &[usize]) -> WellSpec {
    WellSpec {
        name: name.into(),
        control,
        target,
        perforations: cells.to_vec(),
        column: None,
        r_w: DEFAULT_WELLBORE_RADIUS,
        skin: 0.0,
        wi_override: None,
    }
}

pub fn well_set(mesh: &Mesh, specs: &[WellSpec]) -> WellSet {
    WellSet::new(specs.iter().map(|s| s.build(mesh).unwrap()).collect()).unwrap()
}

/// Injector in the first cell, producer in the last.
pub fn two_well_system(n: [usize; 3], seed: u64) -> LevelSystem {
    let mesh = random_mesh(n, seed);
    let nc = mesh.num_cells();
    let wells = well_set(
        &mesh,
        &[
            spec("inj", ControlKind::Rate, Q, &[0]),
            spec("prod", ControlKind::Bhp, P0, &[nc - 1]),
        ],
    );
    LevelSystem::fine(&mesh, &wells, FluidModel::default()).unwrap()
}

/// Single producer in the last cell.
pub fn one_well_system(n: [usize; 3], seed: u64) -> LevelSystem {
    let mesh = random_mesh(n, seed);
    let nc = mesh.num_cells();
    let wells = well_set(&mesh, &[spec("prod", ControlKind::Bhp, P0, &[nc - 1])]);
    LevelSystem::fine(&mesh, &wells, FluidModel::default()).unwrap()
}

/// 16×16×3 with two injectors and two producers, each perforating a full
/// column.
pub fn four_well_system(seed: u64) -> LevelSystem {
    let n = [16, 16, 3];
    let mesh = random_mesh(n, seed);
    let col = |i: usize, j: usize| -> Vec<usize> { (0..3).map(|k| i + 16 * (j + 16 * k)).collect() };
    let wells = well_set(
        &mesh,
        &[
            spec("i1", ControlKind::Rate, Q, &col(0, 0)),
            spec("i2", ControlKind::Rate, Q, &col(15, 15)),
            spec("p1", ControlKind::Bhp, P0, &col(15, 0)),
            spec("p2", ControlKind::Bhp, P0, &col(0, 15)),
        ],
    );
    LevelSystem::fine(&mesh, &wells, FluidModel::default()).unwrap()
}

pub fn hierarchy(sys: LevelSystem, levels: usize, beta: f64) -> Hierarchy {
    Hierarchy::build(
        sys,
        &HierarchyParams {
            levels,
            coarsening_factor: beta,
            ..HierarchyParams::default()
        },
    )
    .unwrap()
}

/// Random state with fluxes of either sign bounded away from zero,
/// pressures around `P0` and saturations in (0.05, 0.95).
pub fn random_state(sys: &LevelSystem, r: &mut ChaCha8Rng) -> Vec<f64> {
    let lay = sys.layout;
    let mut x = vec![0.0; lay.len()];
    for v in &mut x[lay.sigma_r().start..lay.sigma_w().end] {
        let mag = Q * r.random_range(0.1..1.0);
        *v = if r.random_bool(0.5) { mag } else { -mag };
    }
    for v in &mut x[lay.p_r().start..lay.p_w().end] {
        *v = P0 * (1.0 + r.random_range(-0.1..0.1));
    }
    for v in &mut x[lay.s()] {
        *v = r.random_range(0.05..0.95);
    }
    x
}

pub fn random_steps(sys: &LevelSystem, r: &mut ChaCha8Rng) -> StepTerms {
    let s_prev: Vec<f64> = (0..sys.layout.nc).map(|_| r.random_range(0.0..0.5)).collect();
    StepTerms::new(sys, &s_prev, r.random_range(1e3..1e5)).unwrap()
}

/// Relative ℓ2 difference of `a` from the reference `b`; absolute when `b`
/// vanishes.
pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Largest block-wise relative difference over the five state blocks.
pub fn block_rel_diff(sys: &LevelSystem, a: &[f64], b: &[f64]) -> f64 {
    let lay = sys.layout;
    [lay.sigma_r(), lay.sigma_w(), lay.p_r(), lay.p_w(), lay.s()]
        .into_iter()
        .filter(|r| !r.is_empty())
        .map(|r| rel_diff(&a[r.clone()], &b[r]))
        .fold(0.0, f64::max)
}

pub fn injection_total(sys: &LevelSystem) -> f64 {
    sys.controls
        .iter()
        .map(|c| match *c {
            Control::Rate(q) => q,
            Control::Bhp(_) => 0.0,
        })
        .sum()
}

/// Central-difference Jacobian, column by column, with steps relative to
/// each unknown's natural scale.
pub fn fd_jacobian(sys: &LevelSystem, x: &[f64], step: &StepTerms) -> Vec<Vec<f64>> {
    let lay = sys.layout;
    let n = lay.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let scale = if j < lay.p_r().start {
            Q
        } else if j < lay.s().start {
            P0
        } else {
            1.0
        };
        let h = 1e-6 * x[j].abs().max(scale);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let rp = sys.residual(&xp, step);
        let rm = sys.residual(&xm, step);
        cols.push(rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>());
    }
    // Transpose to rows.
    (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
}

/// Largest entry-wise relative error between the analytic and the
/// finite-difference Jacobian. Entries are compared relative to their own
/// size, with a floor of `1e-8` times the largest entry of their row so
/// that structurally negligible entries do not divide by round-off.
pub fn jacobian_error(sys: &LevelSystem, x: &[f64], step: &StepTerms) -> f64 {
    let a = sys.jacobian(x, step).to_dense();
    let fd = fd_jacobian(sys, x, step);
    let mut worst = 0.0f64;
    for (ra, rf) in a.iter().zip(&fd) {
        let row_max = ra.iter().chain(rf).fold(0.0f64, |m, v| m.max(v.abs()));
        for (u, v) in ra.iter().zip(rf) {
            let den = u.abs().max(v.abs()).max(1e-8 * row_max);
            if den > 0.0 {
                worst = worst.max((u - v).abs() / den);
            }
        }
    }
    worst
}

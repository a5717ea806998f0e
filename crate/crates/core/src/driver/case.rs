//! Synthetic layered lognormal permeability fields and the desk-scale
//! five-spot case built on them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fas::SolverKind;
use crate::fluid::FluidModel;
use crate::grid::{build_cartesian_mesh, Mesh};
use crate::wells::{ControlKind, WellSpec, DEFAULT_WELLBORE_RADIUS};

use super::config::{
    MeshConfig, OutputConfig, SimulationConfig, SolverConfig, TimeConfig, TimeUnit,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LognormalSpec {
    pub n: [usize; 3],
    pub h: [f64; 3],
    /// Thickness in cells of each layer, top to bottom; sums to `n[2]`.
    pub layers: Vec<usize>,
    /// Mean log10 shift of each layer before rescaling.
    #[serde(default)]
    pub layer_shift: Vec<f64>,
    /// Standard deviation of log10 permeability inside a layer.
    #[serde(default = "default_log_std")]
    pub log_std: f64,
    /// Half-width in cells of the box filter that correlates the field.
    #[serde(default = "default_smoothing")]
    pub smoothing: usize,
    /// Largest permeability after rescaling, m².
    pub k_max: f64,
    /// Ratio of the largest to the smallest permeability.
    pub contrast: f64,
    #[serde(default = "default_porosity")]
    pub porosity: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_log_std() -> f64 {
    0.5
}

fn default_smoothing() -> usize {
    2
}

fn default_porosity() -> f64 {
    0.2
}

impl LognormalSpec {
    fn validate(&self) -> Result<()> {
        if self.n.iter().any(|&c| c == 0) {
            return Err(Error::Config("lognormal mesh needs nonzero dimensions".into()));
        }
        if self.layers.is_empty()
            || self.layers.contains(&0)
            || self.layers.iter().sum::<usize>() != self.n[2]
        {
            return Err(Error::Config(format!(
                "layer thicknesses {:?} must be positive and sum to nz = {}",
                self.layers, self.n[2]
            )));
        }
        if !self.layer_shift.is_empty() && self.layer_shift.len() != self.layers.len() {
            return Err(Error::Config("one layer shift per layer is required".into()));
        }
        if !(self.k_max > 0.0 && self.contrast >= 1.0 && self.log_std >= 0.0) {
            return Err(Error::Config(
                "lognormal field needs k_max > 0, contrast >= 1, log_std >= 0".into(),
            ));
        }
        if !(self.porosity > 0.0 && self.porosity <= 1.0) {
            return Err(Error::Config("porosity must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Cell-wise isotropic permeability of a lognormal case.
pub fn lognormal_permeability(spec: &LognormalSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let [nx, ny, nz] = spec.n;
    let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let white: Vec<f64> = (0..nx * ny * nz).map(|_| StandardNormal.sample(&mut rng)).collect();

    let r = spec.smoothing as isize;
    let mut log_k = vec![0.0; nx * ny * nz];
    let mut k0 = 0;
    for (layer, &thick) in spec.layers.iter().enumerate() {
        let ks = k0..k0 + thick;
        let mut z = Vec::with_capacity(nx * ny * thick);
        for k in ks.clone() {
            for j in 0..ny {
                for i in 0..nx {
                    let (mut sum, mut cnt) = (0.0, 0usize);
                    for dk in -r..=r {
                        let kk = k as isize + dk;
                        if kk < ks.start as isize || kk >= ks.end as isize {
                            continue;
                        }
                        for dj in -r..=r {
                            let jj = j as isize + dj;
                            if jj < 0 || jj >= ny as isize {
                                continue;
                            }
                            for di in -r..=r {
                                let ii = i as isize + di;
                                if ii < 0 || ii >= nx as isize {
                                    continue;
                                }
                                sum += white[idx(ii as usize, jj as usize, kk as usize)];
                                cnt += 1;
                            }
                        }
                    }
                    z.push(sum / cnt as f64);
                }
            }
        }
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / z.len() as f64;
        let sd = var.sqrt();
        let shift = spec.layer_shift.get(layer).copied().unwrap_or(0.0);
        let mut it = z.into_iter();
        for k in ks {
            for j in 0..ny {
                for i in 0..nx {
                    let v = it.next().unwrap();
                    let std = if sd > 0.0 { (v - mean) / sd } else { 0.0 };
                    log_k[idx(i, j, k)] = shift + spec.log_std * std;
                }
            }
        }
        k0 += thick;
    }

    let lo = log_k.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = log_k.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if spec.contrast == 1.0 || hi <= lo {
        return Ok(vec![spec.k_max; log_k.len()]);
    }
    Ok(log_k
        .iter()
        .map(|&v| {
            let t = (hi - v) / (hi - lo);
            if t == 0.0 {
                spec.k_max
            } else if t == 1.0 {
                spec.k_max / spec.contrast
            } else {
                spec.k_max * spec.contrast.powf(-t)
            }
        })
        .collect())
}

/// Mesh of a lognormal case together with its permeability field.
pub fn generate_lognormal_case(spec: &LognormalSpec) -> Result<(Mesh, Vec<f64>)> {
    let perm = lognormal_permeability(spec)?;
    let iso: Vec<[f64; 3]> = perm.iter().map(|&k| [k; 3]).collect();
    let poro = vec![spec.porosity; perm.len()];
    let mesh = build_cartesian_mesh(spec.n, spec.h, &iso, &poro)?;
    Ok((mesh, perm))
}

/// Lognormal spec of the desk-scale case: 32×32×3 cells of 10 ft, three
/// decades overall with the middle layer roughly that much below the others.
pub fn desk_lognormal(seed: u64) -> LognormalSpec {
    LognormalSpec {
        n: [32, 32, 3],
        h: [3.048; 3],
        layers: vec![1, 1, 1],
        layer_shift: vec![0.0, -3.5, 0.0],
        log_std: 0.15,
        smoothing: 2,
        k_max: 2.6e-13,
        contrast: 1e3,
        porosity: 0.2,
        seed,
    }
}

/// Five-spot on the desk lognormal field: four rate injectors in the
/// corners and one pressure-controlled producer in the middle, each
/// perforating its full column. Eight steps doubling from a largest CFL
/// number of 0.5.
pub fn desk_case(gamma: f64, solver: SolverKind, levels: usize) -> SimulationConfig {
    let well = |name: &str, control, target, col| WellSpec {
        name: name.into(),
        control,
        target,
        perforations: Vec::new(),
        column: Some(col),
        r_w: DEFAULT_WELLBORE_RADIUS,
        skin: 0.0,
        wi_override: None,
    };
    let q = 3.0e-5;
    SimulationConfig {
        mesh: MeshConfig::Lognormal(desk_lognormal(1)),
        fluid: FluidModel {
            gamma,
            ..FluidModel::default()
        },
        wells: vec![
            well("I1", ControlKind::Rate, q, [0, 0]),
            well("I2", ControlKind::Rate, q, [31, 0]),
            well("I3", ControlKind::Rate, q, [0, 31]),
            well("I4", ControlKind::Rate, q, [31, 31]),
            well("P1", ControlKind::Bhp, 1.0e6, [16, 16]),
        ],
        time: TimeConfig {
            dt0: None,
            initial_cfl: Some(0.5),
            unit: TimeUnit::Seconds,
            ramp: 2.0,
            final_time: None,
            max_steps: Some(8),
        },
        solver: SolverConfig {
            kind: solver,
            levels,
            ..SolverConfig::default()
        },
        output: OutputConfig::default(),
    }
}

//! Two-phase fluid model: power-law relative permeabilities, phase and total
//! mobilities, and the wetting-phase fractional flow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Wetting,
    NonWetting,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluidModel {
    /// Wetting-phase viscosity, Pa·s.
    pub mu_w: f64,
    /// Non-wetting-phase viscosity, Pa·s.
    pub mu_nw: f64,
    /// Relative permeability exponent.
    pub gamma: f64,
    /// Evaluate mobilities at the saturation clamped to `[0, 1]`.
    #[serde(default = "default_extension")]
    pub extension: bool,
}

fn default_extension() -> bool {
    true
}

impl Default for FluidModel {
    fn default() -> Self {
        Self {
            mu_w: 1e-3,
            mu_nw: 5e-3,
            gamma: 2.0,
            extension: true,
        }
    }
}

impl FluidModel {
    pub fn new(mu_w: f64, mu_nw: f64, gamma: f64) -> Result<Self> {
        let m = Self {
            mu_w,
            mu_nw,
            gamma,
            extension: true,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_w > 0.0) || !(self.mu_nw > 0.0) {
            return Err(Error::InvalidProperty("viscosities must be > 0".into()));
        }
        if !(self.gamma >= 1.0) {
            return Err(Error::InvalidProperty("gamma must be >= 1".into()));
        }
        Ok(())
    }

    /// Saturation argument actually used, and whether the derivative with
    /// respect to `s` survives (false outside `[0, 1]` with extension on).
    #[inline]
    fn arg(&self, s: f64) -> (f64, bool) {
        if self.extension {
            if s < 0.0 {
                (0.0, false)
            } else if s > 1.0 {
                (1.0, false)
            } else {
                (s, true)
            }
        } else {
            (s, true)
        }
    }

    #[inline]
    fn kr(&self, s: f64) -> (f64, f64) {
        // s^γ and its derivative; for s <= 0 both vanish (γ >= 1).
        if s <= 0.0 {
            return (0.0, if self.gamma == 1.0 { 1.0 } else { 0.0 });
        }
        let v = s.powf(self.gamma);
        (v, self.gamma * v / s)
    }

    pub fn mobility(&self, phase: Phase, s: f64) -> f64 {
        self.mobility_with_derivative(phase, s).0
    }

    /// Phase mobility and its derivative with respect to the wetting saturation.
    pub fn mobility_with_derivative(&self, phase: Phase, s: f64) -> (f64, f64) {
        let (c, live) = self.arg(s);
        match phase {
            Phase::Wetting => {
                let (k, dk) = self.kr(c);
                (k / self.mu_w, if live { dk / self.mu_w } else { 0.0 })
            }
            Phase::NonWetting => {
                let (k, dk) = self.kr(1.0 - c);
                (k / self.mu_nw, if live { -dk / self.mu_nw } else { 0.0 })
            }
        }
    }

    pub fn total_mobility(&self, s: f64) -> f64 {
        self.total_mobility_with_derivative(s).0
    }

    pub fn total_mobility_with_derivative(&self, s: f64) -> (f64, f64) {
        let (lw, dlw) = self.mobility_with_derivative(Phase::Wetting, s);
        let (ln, dln) = self.mobility_with_derivative(Phase::NonWetting, s);
        (lw + ln, dlw + dln)
    }

    pub fn fractional_flow(&self, s: f64) -> f64 {
        self.fractional_flow_with_derivative(s).0
    }

    /// `f_w = λ_w / λ` and `df_w/ds`.
    pub fn fractional_flow_with_derivative(&self, s: f64) -> (f64, f64) {
        let (lw, dlw) = self.mobility_with_derivative(Phase::Wetting, s);
        let (ln, dln) = self.mobility_with_derivative(Phase::NonWetting, s);
        let lt = lw + ln;
        let f = lw / lt;
        let df = (dlw * ln - lw * dln) / (lt * lt);
        (f, df)
    }

    /// Maximum of `f_w'` over `[0, 1]`, found by dense sampling followed by a
    /// golden-section refinement around the best sample.
    pub fn max_fractional_flow_derivative(&self) -> f64 {
        let n = 2000;
        let df = |s: f64| self.fractional_flow_with_derivative(s).1;
        let mut best: usize = 0;
        let mut best_val = f64::NEG_INFINITY;
        for i in 0..=n {
            let v = df(i as f64 / n as f64);
            if v > best_val {
                best_val = v;
                best = i;
            }
        }
        let mut a = (best.saturating_sub(1)) as f64 / n as f64;
        let mut b = ((best + 1).min(n)) as f64 / n as f64;
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if df(c) > df(d) {
                b = d;
            } else {
                a = c;
            }
        }
        best_val.max(df(0.5 * (a + b)))
    }
}

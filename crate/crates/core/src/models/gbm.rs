//! Geometric Brownian motion `dX = -mu X dt + sigma X dW` on `(0, inf)`.
//!
//! Costs: `c0(x) = k3 x + k4 x^beta` (`beta < 0`) and
//! `c1(y, z) = k1 + k2 (z^eta - y^eta)`.

use crate::characteristics::{CharacteristicFns, Characteristics};
use crate::costs::{CostModel, HoldingCost, OrderShape};
use crate::diffusion::DiffusionModel;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbmParams {
    pub mu: f64,
    pub sigma: f64,
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
    #[serde(default)]
    pub k3: f64,
    #[serde(default)]
    pub k4: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
}

fn default_beta() -> f64 {
    -1.0
}

fn default_eta() -> f64 {
    1.0
}

impl GbmParams {
    fn check(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.sigma > 0.0) {
            return Err(Error::Model("geometric Brownian motion needs mu > 0 and sigma > 0".into()));
        }
        if !(self.beta < 0.0) {
            return Err(Error::Costs("beta must be negative".into()));
        }
        Ok(())
    }

    /// `sigma^2 beta^2 / 2 - (mu + sigma^2 / 2) beta`, positive for `beta < 0`.
    pub fn rho(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        0.5 * s2 * self.beta * self.beta - (self.mu + 0.5 * s2) * self.beta
    }

    pub fn diffusion(&self) -> Result<DiffusionModel> {
        self.check()?;
        let (mu, sigma) = (self.mu, self.sigma);
        Ok(DiffusionModel::new(Arc::new(move |x| -mu * x), Arc::new(move |x| sigma * x), 0.0, f64::INFINITY, 1.0)?
            .with_label("gbm"))
    }

    pub fn costs(&self) -> Result<CostModel> {
        let shape = if self.eta == 1.0 {
            OrderShape::Linear { k2: self.k2 }
        } else {
            OrderShape::Power { k2: self.k2, eta: self.eta }
        };
        CostModel::new(HoldingCost::PowerLaw { k3: self.k3, k4: self.k4, beta: self.beta }, self.k1, shape)
    }

    pub fn characteristics(&self) -> Result<Characteristics> {
        self.check()?;
        Ok(Characteristics::closed_form(Arc::new(GbmCharacteristics { p: *self }), 1.0, 0.0, f64::INFINITY, false))
    }

    /// Long-run average cost of the (y, z) policy from the closed forms.
    pub fn policy_cost(&self, y: f64, z: f64) -> f64 {
        let g = GbmCharacteristics { p: *self };
        let c1 = self.k1 + self.k2 * (z.powf(self.eta) - y.powf(self.eta));
        (c1 + g.g0(z) - g.g0(y)) / (g.zeta(z) - g.zeta(y))
    }
}

/// Closed forms anchored at 1.
#[derive(Debug, Clone, Copy)]
pub struct GbmCharacteristics {
    pub p: GbmParams,
}

impl CharacteristicFns for GbmCharacteristics {
    fn g0(&self, x: f64) -> f64 {
        let p = &self.p;
        let mut v = p.k3 / p.mu * (x - 1.0);
        if p.k4 != 0.0 {
            v -= p.k4 / p.rho() * (x.powf(p.beta) - 1.0);
        }
        v
    }

    fn zeta(&self, x: f64) -> f64 {
        2.0 / (2.0 * self.p.mu + self.p.sigma * self.p.sigma) * x.ln()
    }

    fn g0_prime(&self, x: f64) -> f64 {
        let p = &self.p;
        let mut v = p.k3 / p.mu;
        if p.k4 != 0.0 {
            v -= p.k4 * p.beta / p.rho() * x.powf(p.beta - 1.0);
        }
        v
    }

    fn zeta_prime(&self, x: f64) -> f64 {
        2.0 / ((2.0 * self.p.mu + self.p.sigma * self.p.sigma) * x)
    }

    fn g0_second(&self, x: f64) -> f64 {
        let p = &self.p;
        if p.k4 == 0.0 {
            return 0.0;
        }
        -p.k4 * p.beta * (p.beta - 1.0) / p.rho() * x.powf(p.beta - 2.0)
    }

    fn zeta_second(&self, x: f64) -> f64 {
        -2.0 / ((2.0 * self.p.mu + self.p.sigma * self.p.sigma) * x * x)
    }
}

/// `h(x)` with `F* = (mu + sigma^2 / 2) h(y*) = (mu + sigma^2 / 2) h(z*)` at the optimum.
pub fn gbm_level_function(p: &GbmParams, x: f64) -> f64 {
    let mut v = p.k3 / p.mu * x + p.k2 * p.eta * x.powf(p.eta);
    if p.k4 != 0.0 {
        v += p.k4 * (-p.beta) / p.rho() * x.powf(p.beta);
    }
    v
}

/// Minimiser of [`gbm_level_function`], which separates `y*` from `z*`.
pub fn gbm_level_minimizer(p: &GbmParams) -> Option<f64> {
    if p.k4 == 0.0 || (p.k3 == 0.0 && p.k2 == 0.0) {
        return None;
    }
    // golden-section search in log x over a wide bracket
    let f = |t: f64| gbm_level_function(p, t.exp());
    let (mut a, mut b) = (-60.0f64, 60.0f64);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..300 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    Some((0.5 * (a + b)).exp())
}

/// Which qualitative case a parameter set falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GbmRegime {
    /// All cost terms present: a unique interior optimum.
    Standard,
    /// `k4 = 0`: costs vanish as both levels go to 0, so never ordering much is optimal in the limit.
    NoOrderOptimal,
    /// `k2 = k3 = 0`: cost decreases without bound in the order-up-to level.
    NoOptimum,
    /// `k3 = 0` with `k2, k4 > 0`: optimum exists though a standing cost condition fails.
    LinearHoldingAbsent,
}

pub fn gbm_regime(p: &GbmParams) -> GbmRegime {
    if p.k4 == 0.0 {
        GbmRegime::NoOrderOptimal
    } else if p.k2 == 0.0 && p.k3 == 0.0 {
        GbmRegime::NoOptimum
    } else if p.k3 == 0.0 {
        GbmRegime::LinearHoldingAbsent
    } else {
        GbmRegime::Standard
    }
}

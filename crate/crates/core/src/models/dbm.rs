//! Drifted Brownian motion `dX = -mu dt + sigma dW`, free or reflected at 0.

use crate::characteristics::{CharacteristicFns, Characteristics};
use crate::costs::{CostModel, HoldingCost, OrderShape};
use crate::diffusion::DiffusionModel;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Parameters; `mu > 0` is the demand rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbmParams {
    pub mu: f64,
    pub sigma: f64,
    /// Backorder cost rate (unused when reflected).
    #[serde(default)]
    pub c_b: f64,
    pub c_h: f64,
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
    /// Cost per unit of local time at 0 (reflected model).
    #[serde(default)]
    pub k5: Option<f64>,
}

impl DbmParams {
    fn check(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.sigma > 0.0) {
            return Err(Error::Model("drifted Brownian motion needs mu > 0 and sigma > 0".into()));
        }
        Ok(())
    }

    fn theta(&self) -> f64 {
        2.0 * self.mu / (self.sigma * self.sigma)
    }

    pub fn diffusion(&self) -> Result<DiffusionModel> {
        self.check()?;
        let (mu, sigma) = (self.mu, self.sigma);
        Ok(DiffusionModel::new(Arc::new(move |_| -mu), Arc::new(move |_| sigma), f64::NEG_INFINITY, f64::INFINITY, 0.0)?
            .with_length_scale(1.0 / self.theta())
            .with_label("dbm"))
    }

    pub fn reflected_diffusion(&self) -> Result<DiffusionModel> {
        self.check()?;
        let (mu, sigma) = (self.mu, self.sigma);
        let scale = 1.0 / self.theta();
        Ok(DiffusionModel::new(Arc::new(move |_| -mu), Arc::new(move |_| sigma), 0.0, f64::INFINITY, scale)?
            .with_reflecting_left()?
            .with_length_scale(scale)
            .with_label("reflected_dbm"))
    }

    pub fn costs(&self) -> Result<CostModel> {
        let c = CostModel::new(
            HoldingCost::PiecewiseLinear { c_b: self.c_b, c_h: self.c_h },
            self.k1,
            OrderShape::Linear { k2: self.k2 },
        )?;
        Ok(match self.k5 {
            Some(k5) => c.with_reflection_cost(k5),
            None => c,
        })
    }

    pub fn characteristics(&self, reflected: bool) -> Result<Characteristics> {
        self.check()?;
        let left = if reflected { 0.0 } else { f64::NEG_INFINITY };
        Ok(Characteristics::closed_form(Arc::new(DbmCharacteristics { p: *self }), 0.0, left, f64::INFINITY, reflected))
    }

    /// Point where `g0''` changes sign: `(sigma^2 / 2 mu) ln(c_b / (c_b + c_h))`.
    pub fn threshold(&self) -> f64 {
        (self.c_b / (self.c_b + self.c_h)).ln() / self.theta()
    }

    /// Long-run average cost of the (y, z) policy, from the closed forms.
    pub fn policy_cost(&self, y: f64, z: f64) -> f64 {
        let g = DbmCharacteristics { p: *self };
        (self.k1 + self.k2 * (z - y) + g.g0(z) - g.g0(y)) / ((z - y) / self.mu)
    }
}

/// Closed forms anchored at 0.
#[derive(Debug, Clone, Copy)]
pub struct DbmCharacteristics {
    pub p: DbmParams,
}

impl CharacteristicFns for DbmCharacteristics {
    fn g0(&self, x: f64) -> f64 {
        let DbmParams { mu, sigma, c_b, c_h, .. } = self.p;
        let s2 = sigma * sigma;
        if x < 0.0 {
            -c_b / (2.0 * mu) * x * x - s2 * c_b / (2.0 * mu * mu) * x
                + s2 * s2 * (c_b + c_h) / (4.0 * mu.powi(3)) * (self.p.theta() * x).exp_m1()
        } else {
            c_h / (2.0 * mu) * x * x + s2 * c_h / (2.0 * mu * mu) * x
        }
    }

    fn zeta(&self, x: f64) -> f64 {
        x / self.p.mu
    }

    fn g0_prime(&self, x: f64) -> f64 {
        let DbmParams { mu, sigma, c_b, c_h, .. } = self.p;
        let s2 = sigma * sigma;
        if x < 0.0 {
            -(c_b / mu) * x - s2 * c_b / (2.0 * mu * mu) + s2 * (c_b + c_h) / (2.0 * mu * mu) * (self.p.theta() * x).exp()
        } else {
            (c_h / mu) * x + s2 * c_h / (2.0 * mu * mu)
        }
    }

    fn zeta_prime(&self, _x: f64) -> f64 {
        1.0 / self.p.mu
    }

    fn g0_second(&self, x: f64) -> f64 {
        let DbmParams { mu, c_b, c_h, .. } = self.p;
        if x < 0.0 {
            -c_b / mu + (c_b + c_h) / mu * (self.p.theta() * x).exp()
        } else {
            c_h / mu
        }
    }

    fn zeta_second(&self, _x: f64) -> f64 {
        0.0
    }
}

/// Stationary density of the (y, z) policy for the free model.
pub fn dbm_stationary_density(p: &DbmParams, y: f64, z: f64, x: f64) -> f64 {
    let th = p.theta();
    if x <= y {
        0.0
    } else if x <= z {
        -(-th * (x - y)).exp_m1() / (z - y)
    } else {
        ((th * z).exp() - (th * y).exp()) / (z - y) * (-th * x).exp()
    }
}

fn require_reflection_cost(p: &DbmParams) -> Result<f64> {
    p.k5.ok_or_else(|| Error::Costs("reflection cost k5 is required for this comparison".into()))
}

/// Optimal (y*, z*, F*) of the reflected model: `y* = 0`.
pub fn reflected_optimum(p: &DbmParams) -> (f64, f64, f64) {
    let z = (2.0 * p.k1 * p.mu / p.c_h).sqrt();
    let f = (2.0 * p.k1 * p.mu * p.c_h).sqrt() + p.k2 * p.mu + p.sigma * p.sigma * p.c_h / (2.0 * p.mu);
    (0.0, z, f)
}

/// Long-run cost of never ordering and paying `k5` per unit of local time at 0.
pub fn jit_cost(p: &DbmParams) -> Result<f64> {
    Ok(p.sigma * p.sigma * p.c_h / (2.0 * p.mu) + require_reflection_cost(p)? * p.mu)
}

/// Strictly cheaper to supply just in time than to run the optimal (s, S) policy.
pub fn jit_better(p: &DbmParams) -> Result<bool> {
    let k5 = require_reflection_cost(p)?;
    let (_, z, _) = reflected_optimum(p);
    Ok(k5 - p.k2 < p.c_h * z / p.mu)
}

/// Cost of the policy that, after ordering to `z`, waits for 0, then orders
/// to `z` when the reflected process climbs back to `y`.
pub fn delayed_cost(p: &DbmParams, y: f64, z: f64) -> Result<f64> {
    let k5 = require_reflection_cost(p)?;
    let DbmParams { mu, sigma, c_h, k1, k2, .. } = *p;
    let s2 = sigma * sigma;
    let e = (2.0 * mu * y / s2).exp_m1();
    let g = DbmCharacteristics { p: *p };
    let num = k1 + k2 * (z - y) + g.g0(z) - g.g0(y) + (s2 * s2 * c_h / (4.0 * mu.powi(3)) + s2 * k5 / (2.0 * mu)) * e;
    let den = (z - y) / mu + s2 / (2.0 * mu * mu) * e;
    Ok(num / den)
}

/// Numerator of the derivative of [`delayed_cost`] in `y`; its sign is the derivative's sign.
pub fn delayed_cost_dy_numerator(p: &DbmParams, y: f64, z: f64) -> Result<f64> {
    let k5 = require_reflection_cost(p)?;
    let DbmParams { mu, sigma, c_h, k1, k2, .. } = *p;
    let s2 = sigma * sigma;
    let ex = (2.0 * mu * y / s2).exp();
    let e = ex - 1.0;
    Ok(-(c_h / (mu * mu)) * y * (z - y)
        - (c_h * s2 * y + c_h * mu * (z * z - y * y) + 2.0 * mu * mu * k1) / (2.0 * mu.powi(3)) * e
        - (k2 - k5) * ((z - y) / mu * ex + s2 / (2.0 * mu * mu) * e))
}

/// The delayed policy is cheaper than plain (y, z).
pub fn delayed_beats(p: &DbmParams, y: f64, z: f64) -> Result<bool> {
    let floor = jit_cost(p)?;
    Ok(floor < p.policy_cost(y, z))
}

/// Sufficient condition for the delayed policy to beat every (y, z).
pub fn delayed_sufficient(p: &DbmParams) -> Result<bool> {
    let k5 = require_reflection_cost(p)?;
    Ok(k5 < p.k2 + (2.0 * p.k1 * p.c_h / p.mu).sqrt())
}

/// Stationary density of the delayed policy.
pub fn delayed_stationary_density(p: &DbmParams, y: f64, z: f64, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let (mu, s2) = (p.mu, p.sigma * p.sigma);
    let th = 2.0 * mu / s2;
    let alpha = 1.0 / ((z - y) / mu + s2 / (2.0 * mu * mu) * (th * y).exp_m1());
    let mut v = 0.0;
    if x <= y {
        v += (th * (y - x)).exp_m1() / mu;
    }
    if x <= z {
        v += -(-th * x).exp_m1() / mu;
    } else {
        v += (th * z).exp_m1() * (-th * x).exp() / mu;
    }
    alpha * v
}

/// Long-run local time per unit time accrued by the delayed policy.
pub fn delayed_reflection_rate(p: &DbmParams, y: f64, z: f64) -> f64 {
    let (mu, s2) = (p.mu, p.sigma * p.sigma);
    let e = (2.0 * mu * y / s2).exp_m1();
    let alpha = 1.0 / ((z - y) / mu + s2 / (2.0 * mu * mu) * e);
    alpha * s2 / (2.0 * mu) * e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, QuadOptions};

    fn refl() -> DbmParams {
        DbmParams { mu: 1.0, sigma: 1.0, c_b: 0.0, c_h: 1.0, k1: 2.0, k2: 0.5, k5: Some(1.0) }
    }

    #[test]
    fn closed_form_examples() {
        let p = DbmParams { mu: 1.0, sigma: 2f64.sqrt(), c_b: 1.0, c_h: 1.0, k1: 1.0, k2: 0.0, k5: None };
        let g = DbmCharacteristics { p };
        assert_eq!(g.zeta(3.0), 3.0);
        assert!((g.g0(1.0) - 1.5).abs() < 1e-15);
        assert!((p.threshold() - 0.5f64.ln()).abs() < 1e-15);
        assert!((g.g0_prime(p.threshold()) - 2f64.ln()).abs() < 1e-14);
        assert!((p.policy_cost(0.0, 1.0) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn g0_is_c1_across_zero() {
        let p = DbmParams { mu: 0.7, sigma: 1.3, c_b: 2.0, c_h: 0.5, k1: 1.0, k2: 0.0, k5: None };
        let g = DbmCharacteristics { p };
        assert!((g.g0(-1e-12) - g.g0(0.0)).abs() < 1e-10);
        assert!((g.g0_prime(-1e-12) - g.g0_prime(0.0)).abs() < 1e-10);
    }

    #[test]
    fn reflected_examples() {
        let p = refl();
        let (y, z, f) = reflected_optimum(&p);
        assert_eq!((y, z, f), (0.0, 2.0, 3.0));
        assert_eq!(jit_cost(&p).unwrap(), 1.5);
        assert!(jit_better(&p).unwrap());
        let tie = DbmParams { k5: Some(2.5), ..p };
        assert!(!jit_better(&tie).unwrap());
        let dear = DbmParams { k5: Some(5.0), ..p };
        assert!(!jit_better(&dear).unwrap());
    }

    #[test]
    fn delayed_policy_example() {
        let p = DbmParams { k5: Some(0.1), ..refl() };
        assert!((p.policy_cost(0.5, 2.0) - 3.583_333_333_333_333).abs() < 1e-12);
        let ft = delayed_cost(&p, 0.5, 2.0).unwrap();
        assert!((ft - 2.4969).abs() < 1e-4, "{ft}");
        assert!(delayed_beats(&p, 0.5, 2.0).unwrap());
    }

    #[test]
    fn delayed_density_integrates_to_one() {
        let p = refl();
        let (y, z) = (0.5, 2.0);
        let o = QuadOptions::default();
        let mass = integrate(|x| delayed_stationary_density(&p, y, z, x), 0.0, y, o)
            + integrate(|x| delayed_stationary_density(&p, y, z, x), y, z, o)
            + integrate(|x| delayed_stationary_density(&p, y, z, x), z, 60.0, o);
        assert!((mass - 1.0).abs() < 1e-10, "{mass}");
    }

    #[test]
    fn dy_numerator_sign_matches_difference_quotient() {
        let p = DbmParams { k5: Some(0.3), ..refl() };
        for &(y, z) in &[(0.2, 1.5), (0.8, 3.0), (1.5, 2.0)] {
            let h = 1e-6;
            let d = (delayed_cost(&p, y + h, z).unwrap() - delayed_cost(&p, y - h, z).unwrap()) / (2.0 * h);
            let n = delayed_cost_dy_numerator(&p, y, z).unwrap();
            assert_eq!(d.signum(), n.signum(), "{y} {z} {d} {n}");
        }
    }

    #[test]
    fn free_density_integrates_to_one() {
        let p = DbmParams { mu: 1.0, sigma: 2f64.sqrt(), c_b: 1.0, c_h: 1.0, k1: 1.0, k2: 0.0, k5: None };
        let o = QuadOptions::default();
        let mass = integrate(|x| dbm_stationary_density(&p, 0.0, 1.0, x), 0.0, 1.0, o)
            + integrate(|x| dbm_stationary_density(&p, 0.0, 1.0, x), 1.0, 80.0, o);
        assert!((mass - 1.0).abs() < 1e-10);
    }
}

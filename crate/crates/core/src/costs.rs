//! Holding and ordering costs.
//!
//! The ordering cost has level form `c1(y, z) = k1 + H(z) - H(y)` with `H`
//! nondecreasing, so the order-size-dependent part depends only on the
//! pre- and post-order levels.

use crate::diffusion::{DiffusionModel, Side};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::ext::ExtReal;
use serde::{Deserialize, Serialize};

/// Running cost `c0` per unit time.
#[derive(Debug, Clone)]
pub enum HoldingCost {
    /// `c_b |x|` below zero (backorders), `c_h x` above.
    PiecewiseLinear { c_b: f64, c_h: f64 },
    /// `k3 x + k4 x^beta` with `beta < 0`.
    PowerLaw { k3: f64, k4: f64, beta: f64 },
    Expression(Expr),
}

impl HoldingCost {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            HoldingCost::PiecewiseLinear { c_b, c_h } => {
                if x < 0.0 {
                    -c_b * x
                } else {
                    c_h * x
                }
            }
            HoldingCost::PowerLaw { k3, k4, beta } => {
                let mut v = k3 * x;
                if *k4 != 0.0 {
                    v += k4 * x.powf(*beta);
                }
                v
            }
            HoldingCost::Expression(e) => e.eval(x),
        }
    }
}

/// Level function `H` in the ordering cost.
#[derive(Debug, Clone)]
pub enum OrderShape {
    /// `H(x) = k2 x`.
    Linear { k2: f64 },
    /// `H(x) = k2 x^eta`, `0 < eta <= 1`.
    Power { k2: f64, eta: f64 },
    Expression(Expr),
}

impl OrderShape {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            OrderShape::Linear { k2 } => k2 * x,
            OrderShape::Power { k2, eta } => k2 * x.powf(*eta),
            OrderShape::Expression(e) => e.eval(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            OrderShape::Linear { k2 } => *k2,
            OrderShape::Power { k2, eta } => k2 * eta * x.powf(eta - 1.0),
            OrderShape::Expression(e) => {
                let h = 1e-6f64.max(1e-6 * x.abs());
                (e.eval(x + h) - e.eval(x - h)) / (2.0 * h)
            }
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match self {
            OrderShape::Linear { .. } => 0.0,
            OrderShape::Power { k2, eta } => k2 * eta * (eta - 1.0) * x.powf(eta - 2.0),
            OrderShape::Expression(e) => {
                let h = 1e-4f64.max(1e-4 * x.abs());
                (e.eval(x + h) - 2.0 * e.eval(x) + e.eval(x - h)) / (h * h)
            }
        }
    }
}

/// Holding cost, ordering cost and (optionally) the reflection cost rate.
#[derive(Debug, Clone)]
pub struct CostModel {
    holding: HoldingCost,
    k1: f64,
    shape: OrderShape,
    reflection: Option<f64>,
}

impl CostModel {
    pub fn new(holding: HoldingCost, k1: f64, shape: OrderShape) -> Result<Self> {
        if !(k1 > 0.0 && k1.is_finite()) {
            return Err(Error::Costs(format!("fixed ordering cost must be positive, got {k1}")));
        }
        match &holding {
            HoldingCost::PiecewiseLinear { c_b, c_h } if !(*c_b >= 0.0 && *c_h >= 0.0) => {
                return Err(Error::Costs("holding and backorder rates must be nonnegative".into()))
            }
            HoldingCost::PowerLaw { k3, k4, beta } if !(*k3 >= 0.0 && *k4 >= 0.0 && *beta < 0.0) => {
                return Err(Error::Costs("power-law holding cost needs k3, k4 >= 0 and beta < 0".into()))
            }
            _ => {}
        }
        match &shape {
            OrderShape::Linear { k2 } if *k2 < 0.0 => {
                return Err(Error::Costs("per-unit ordering cost must be nonnegative".into()))
            }
            OrderShape::Power { k2, eta } if !(*k2 >= 0.0 && *eta > 0.0 && *eta <= 1.0) => {
                return Err(Error::Costs("power ordering cost needs k2 >= 0 and 0 < eta <= 1".into()))
            }
            _ => {}
        }
        Ok(Self { holding, k1, shape, reflection: None })
    }

    /// Cost per unit of local time spent at a reflecting boundary.
    pub fn with_reflection_cost(mut self, k5: f64) -> Self {
        self.reflection = Some(k5);
        self
    }

    pub fn holding(&self) -> &HoldingCost {
        &self.holding
    }
    pub fn shape(&self) -> &OrderShape {
        &self.shape
    }
    pub fn fixed(&self) -> f64 {
        self.k1
    }
    pub fn reflection_cost(&self) -> Option<f64> {
        self.reflection
    }

    pub fn c0(&self, x: f64) -> f64 {
        self.holding.eval(x)
    }

    /// Cost of ordering from level `y` up to level `z`.
    pub fn c1(&self, y: f64, z: f64) -> f64 {
        self.k1 + self.shape.eval(z) - self.shape.eval(y)
    }

    pub fn h(&self, x: f64) -> f64 {
        self.shape.eval(x)
    }
    pub fn h_prime(&self, x: f64) -> f64 {
        self.shape.derivative(x)
    }
    pub fn h_second(&self, x: f64) -> f64 {
        self.shape.second_derivative(x)
    }
    pub fn dc1_dy(&self, y: f64) -> f64 {
        -self.h_prime(y)
    }
    pub fn dc1_dz(&self, z: f64) -> f64 {
        self.h_prime(z)
    }
    pub fn d2c1_dy2(&self, y: f64) -> f64 {
        -self.h_second(y)
    }
}

/// Outcome of a numerical check that may be unable to decide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Pass,
    Fail,
    Indeterminate,
}

impl Check {
    fn and(self, other: Check) -> Check {
        match (self, other) {
            (Check::Fail, _) | (_, Check::Fail) => Check::Fail,
            (Check::Indeterminate, _) | (_, Check::Indeterminate) => Check::Indeterminate,
            _ => Check::Pass,
        }
    }

    fn from_finiteness(v: ExtReal, want_finite: bool) -> Check {
        match v.finiteness() {
            Some(f) if f == want_finite => Check::Pass,
            Some(_) => Check::Fail,
            None => Check::Indeterminate,
        }
    }

    pub fn passed(self) -> bool {
        self == Check::Pass
    }
}

/// Standing requirements on the cost structure.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CostValidation {
    /// Sublevel sets of `c0` are compact in the open interval.
    pub inf_compact: Check,
    /// `int_C^b c0 dM < inf`.
    pub integrable: Check,
    /// `int_C^b int_u^b c0 dM dS(u) = inf`.
    pub double_integral_infinite: Check,
    /// `c0 -> inf` at the left end when that end is in the state space.
    pub limit_at_left: Check,
    /// `c0 -> inf` at the right end when that end is in the state space.
    pub limit_at_right: Check,
}

impl CostValidation {
    pub fn all_passed(&self) -> bool {
        [self.inf_compact, self.integrable, self.double_integral_infinite, self.limit_at_left, self.limit_at_right]
            .iter()
            .all(|c| c.passed())
    }
}

fn probes_toward(model: &DiffusionModel, side: Side) -> Vec<f64> {
    let c = model.anchor();
    let end = model.boundary(side);
    let dir = if side == Side::Right { 1.0 } else { -1.0 };
    (1..=12)
        .map(|k| {
            if end.is_finite() {
                end - (end - c) * 10f64.powi(-k)
            } else {
                c + dir * model.length_scale() * 10f64.powi(k - 2)
            }
        })
        .collect()
}

/// Grows without bound toward the boundary: pass, bounded by interior: fail.
fn growth_toward(model: &DiffusionModel, costs: &CostModel, side: Side, interior_min: f64) -> Check {
    let vals: Vec<f64> = probes_toward(model, side).iter().map(|&x| costs.c0(x)).collect();
    let tail = &vals[vals.len() - 5..];
    let last = *tail.last().unwrap();
    let floor = interior_min.max(1e-12);
    let rising = tail.windows(2).all(|w| w[1] >= w[0]);
    if rising && last >= 10.0 * floor && last > tail[0] * 1.5 {
        Check::Pass
    } else if last <= 1.5 * floor || tail.windows(2).all(|w| w[1] <= w[0]) {
        Check::Fail
    } else {
        Check::Indeterminate
    }
}

/// Numerically check the standing cost requirements against a model.
pub fn validate_costs(model: &DiffusionModel, costs: &CostModel) -> Result<CostValidation> {
    let bounds = model.classify_boundaries()?;
    let lp = probes_toward(model, Side::Left);
    let rp = probes_toward(model, Side::Right);
    let (lo, hi) = (lp[0], rp[0]);
    let interior_min = (0..=64)
        .map(|i| costs.c0(lo + (hi - lo) * i as f64 / 64.0))
        .fold(f64::INFINITY, f64::min);
    // A reflecting left end belongs to the state space, so no growth is needed there.
    let left_growth = if model.left_reflecting() {
        Check::Pass
    } else {
        growth_toward(model, costs, Side::Left, interior_min)
    };
    let inf_compact = left_growth.and(growth_toward(model, costs, Side::Right, interior_min));
    let c = model.anchor();
    let integrable = Check::from_finiteness(model.speed_integral_to_boundary(|v| costs.c0(v), c, Side::Right)?, true);
    let double = if integrable == Check::Pass {
        let outer = model.integrate_out(
            |u| model.relative_speed_tail(|v| costs.c0(v), u, Side::Right).to_f64(),
            c,
            Side::Right,
        );
        Check::from_finiteness(outer, false)
    } else {
        Check::Indeterminate
    };
    let limit_at_left = if bounds.left.attainable {
        left_growth
    } else {
        Check::Pass
    };
    let limit_at_right = if bounds.right.class == crate::diffusion::BoundaryClass::Entrance {
        growth_toward(model, costs, Side::Right, interior_min)
    } else {
        Check::Pass
    };
    Ok(CostValidation { inf_compact, integrable, double_integral_infinite: double, limit_at_left, limit_at_right })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn gbm() -> DiffusionModel {
        DiffusionModel::new(Arc::new(|x| -0.5 * x), Arc::new(|x| x), 0.0, f64::INFINITY, 1.0).unwrap()
    }

    fn dbm() -> DiffusionModel {
        DiffusionModel::new(Arc::new(|_| -1.0), Arc::new(|_| 2f64.sqrt()), f64::NEG_INFINITY, f64::INFINITY, 0.0)
            .unwrap()
    }

    #[test]
    fn ordering_cost_examples() {
        let c = CostModel::new(HoldingCost::PiecewiseLinear { c_b: 1.0, c_h: 1.0 }, 1.0, OrderShape::Linear { k2: 1.0 })
            .unwrap();
        assert_eq!(c.c1(-1.0, 2.0), 4.0);
        let g = CostModel::new(
            HoldingCost::PowerLaw { k3: 1.0, k4: 1.0, beta: -1.0 },
            1.0,
            OrderShape::Power { k2: 2.0, eta: 0.5 },
        )
        .unwrap();
        assert!((g.c1(1.0, 4.0) - 3.0).abs() < 1e-15);
        assert!((g.c0(2.0) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_fixed_cost() {
        let r = CostModel::new(HoldingCost::PiecewiseLinear { c_b: 1.0, c_h: 1.0 }, 0.0, OrderShape::Linear { k2: 1.0 });
        assert!(matches!(r, Err(Error::Costs(_))));
    }

    #[test]
    fn shape_derivatives() {
        let s = OrderShape::Power { k2: 2.0, eta: 0.5 };
        assert!((s.derivative(4.0) - 0.5).abs() < 1e-15);
        let e = OrderShape::Expression(Expr::parse("2*x^0.5").unwrap());
        assert!((e.derivative(4.0) - 0.5).abs() < 1e-8);
        assert!((e.second_derivative(4.0) - s.second_derivative(4.0)).abs() < 1e-5);
    }

    #[test]
    fn standard_gbm_costs_pass() {
        let c = CostModel::new(
            HoldingCost::PowerLaw { k3: 1.0, k4: 1.0, beta: -1.0 },
            1.0,
            OrderShape::Power { k2: 1.0, eta: 0.5 },
        )
        .unwrap();
        let v = validate_costs(&gbm(), &c).unwrap();
        assert!(v.all_passed(), "{v:?}");
    }

    #[test]
    fn gbm_without_power_term_is_not_inf_compact() {
        let c = CostModel::new(HoldingCost::PowerLaw { k3: 1.0, k4: 0.0, beta: -1.0 }, 1.0, OrderShape::Linear { k2: 1.0 })
            .unwrap();
        let v = validate_costs(&gbm(), &c).unwrap();
        assert_eq!(v.inf_compact, Check::Fail);
    }

    #[test]
    fn gbm_without_linear_term_has_finite_double_integral() {
        let c = CostModel::new(HoldingCost::PowerLaw { k3: 0.0, k4: 1.0, beta: -1.0 }, 1.0, OrderShape::Linear { k2: 1.0 })
            .unwrap();
        let v = validate_costs(&gbm(), &c).unwrap();
        assert_eq!(v.integrable, Check::Pass);
        assert_eq!(v.double_integral_infinite, Check::Fail);
    }

    #[test]
    fn dbm_costs_pass() {
        let c = CostModel::new(HoldingCost::PiecewiseLinear { c_b: 1.0, c_h: 1.0 }, 1.0, OrderShape::Linear { k2: 1.0 })
            .unwrap();
        let v = validate_costs(&dbm(), &c).unwrap();
        assert!(v.all_passed(), "{v:?}");
    }
}

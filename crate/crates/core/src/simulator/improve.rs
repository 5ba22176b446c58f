//! Pathwise improvement of a single large order in the geometric model.
//!
//! An order that lifts the level above a threshold is replaced by a ladder
//! of orders: order at most up to `z`, then again each time the level falls
//! to `y` (the minimiser of the holding cost), until the replacement path
//! meets the original. Both paths are driven by the same multiplicative
//! noise, so between orders they stay in constant proportion.

use crate::error::{Error, Result};
use crate::models::GbmParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImproveCase {
    /// Post-order level at most the threshold: keep the order.
    PassThrough,
    /// Pre-order level above `y`: skip the order and wait for `y`.
    Deferred,
    /// Pre-order level at or below `y`: order only up to `z` now.
    Immediate,
}

/// Levels and threshold for a given target `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImproveSetup {
    pub params: GbmParams,
    /// Minimiser of the holding cost.
    pub y: f64,
    pub z: f64,
    /// Post-order levels above this are replaced.
    pub threshold: f64,
}

/// Minimiser `y` of the holding cost and the threshold (in `x^eta` units) for target `z`.
pub fn gbm_order_threshold(p: &GbmParams, z: f64) -> Result<(f64, f64)> {
    if !(p.k2 > 0.0 && p.k3 > 0.0 && p.k4 > 0.0) {
        return Err(Error::Model("the order ladder needs k2, k3, k4 > 0".into()));
    }
    let y = ((-p.beta) * p.k4 / p.k3).powf(1.0 / (1.0 - p.beta));
    if !(z > y) {
        return Err(Error::Model(format!("target z = {z} must exceed the holding-cost minimiser {y}")));
    }
    let (ye, ze) = (y.powf(p.eta), z.powf(p.eta));
    let q = ze / ye;
    let lin = |m: f64| ze + (p.k1 / p.k2 + ze - ye) * m;
    let lin_hat = |m: f64| (p.k1 * ze / (p.k2 * (ze - ye)) + ze) * m;
    let geo = |m: f64| ye * q.powf(m - 1.0);
    // first index from which consecutive intervals [lower(m), geo(m)] overlap for good
    let start = |lower: &dyn Fn(f64) -> f64| -> Result<f64> {
        let mut last_gap = 0usize;
        let mut m = 1usize;
        loop {
            let g = geo(m as f64);
            if !(lower(m as f64 + 1.0) <= g) {
                last_gap = m;
            } else if g.is_infinite() || (g * (q - 1.0) > lower(2.0) - lower(1.0) && m > last_gap + 1) {
                return Ok((last_gap + 1) as f64);
            }
            m += 1;
            if m > 100_000 {
                return Err(Error::Model("order-ladder intervals never overlap".into()));
            }
        }
    };
    let m_bar = start(&lin)?;
    let m_hat = start(&lin_hat)?;
    Ok((y, lin(m_bar).max(lin_hat(m_hat)).max(ze)))
}

impl ImproveSetup {
    pub fn new(params: &GbmParams, z: f64) -> Result<Self> {
        let (y, big_l) = gbm_order_threshold(params, z)?;
        Ok(Self { params: *params, y, z, threshold: big_l.powf(1.0 / params.eta) })
    }

    pub fn classify(&self, pre: f64, post: f64) -> ImproveCase {
        if post <= self.threshold {
            ImproveCase::PassThrough
        } else if pre > self.y {
            ImproveCase::Deferred
        } else {
            ImproveCase::Immediate
        }
    }

    /// Bound on the ladder length for an immediate replacement of an order
    /// up to `post`: the least `j` with `post (y / z)^(j - 1) <= z`.
    pub fn orders_needed(&self, post: f64) -> usize {
        let mut j = 1;
        let mut level = post;
        while level > self.z {
            level *= self.y / self.z;
            j += 1;
        }
        j
    }

    fn c0(&self, x: f64) -> f64 {
        self.params.k3 * x + self.params.k4 * x.powf(self.params.beta)
    }

    fn c1(&self, from: f64, to: f64) -> f64 {
        let e = self.params.eta;
        self.params.k1 + self.params.k2 * (to.powf(e) - from.powf(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderRecord {
    pub step: usize,
    pub pre: f64,
    pub post: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderComparison {
    pub case: ImproveCase,
    pub original: Vec<OrderRecord>,
    pub transformed: Vec<OrderRecord>,
    /// Largest excess of the replacement's cumulative cost over the original's, over all grid times.
    pub max_excess: f64,
    pub original_cost: f64,
    pub transformed_cost: f64,
    /// Grid step at which the two paths coincide again.
    pub coalesced_at: Option<usize>,
    /// The replacement level stayed within `[y, original level]` whenever they differed.
    pub level_dominated: bool,
}

/// Run one original order (at `order_step`, up to `post`) and its
/// replacement along the log-increments `log_steps` of the uncontrolled
/// path from `x0`. Holding costs use left-point sums over the grid.
pub fn compare_single_order(
    setup: &ImproveSetup,
    x0: f64,
    order_step: usize,
    post: f64,
    log_steps: &[f64],
    dt: f64,
) -> Result<OrderComparison> {
    if order_step > log_steps.len() {
        return Err(Error::Config("order step beyond the noise path".into()));
    }
    let mut x = x0;
    for inc in &log_steps[..order_step] {
        x *= inc.exp();
    }
    let pre = x;
    if !(post > pre) {
        return Err(Error::Config(format!("order must raise the level: {pre} -> {post}")));
    }
    let case = setup.classify(pre, post);
    let mut orig = post;
    let first = OrderRecord { step: order_step, pre, post, cost: setup.c1(pre, post) };
    let mut transformed = Vec::new();
    let mut alt = match case {
        ImproveCase::PassThrough => post,
        ImproveCase::Deferred => pre,
        ImproveCase::Immediate => {
            transformed.push(OrderRecord { step: order_step, pre, post: setup.z, cost: setup.c1(pre, setup.z) });
            setup.z
        }
    };
    let mut merged = case == ImproveCase::PassThrough;
    if merged {
        transformed.push(first);
    }
    let mut coalesced_at = merged.then_some(order_step);

    // costs up to the order are shared, so only accumulate from there
    let mut cum_orig = first.cost;
    let mut cum_alt: f64 = transformed.iter().map(|o| o.cost).sum();
    let scale = 1.0 + cum_orig.abs();
    let mut max_excess = cum_alt - cum_orig;
    let mut dominated = true;
    for (i, inc) in log_steps.iter().enumerate().skip(order_step) {
        cum_orig += setup.c0(orig) * dt;
        cum_alt += setup.c0(alt) * dt;
        let g = inc.exp();
        orig *= g;
        alt = if merged { orig } else { alt * g };
        if !merged && alt <= setup.y {
            // the replacement touched y inside this step; its order happens there
            let ratio = orig / alt;
            let at_hit = ratio * setup.y;
            let target = at_hit.min(setup.z);
            let cost = setup.c1(setup.y, target);
            cum_alt += cost;
            transformed.push(OrderRecord { step: i + 1, pre: setup.y, post: target, cost });
            if at_hit <= setup.z {
                merged = true;
                alt = orig;
                coalesced_at = Some(i + 1);
            } else {
                alt *= setup.z / setup.y;
            }
        }
        if !merged && !(alt >= setup.y * (1.0 - 1e-12) && alt <= orig * (1.0 + 1e-12)) {
            dominated = false;
        }
        max_excess = max_excess.max((cum_alt - cum_orig) / scale);
    }
    Ok(OrderComparison {
        case,
        original: vec![first],
        transformed,
        max_excess,
        original_cost: cum_orig,
        transformed_cost: cum_alt,
        coalesced_at,
        level_dominated: dominated,
    })
}

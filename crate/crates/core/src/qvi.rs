//! The candidate value function `G` built from an (s, S) optimum, and a
//! grid-based certificate that it solves the quasi-variational inequality
//!
//! ```text
//! AG + c0 - F >= 0,   BG + c1 >= 0,
//! AG + c0 - F = 0 above y*,   G(z*) - G(x) + c1(x, z*) = 0 at and below y*.
//! ```

use crate::characteristics::Characteristics;
use crate::coords::Coordinate;
use crate::costs::{Check, CostModel};
use crate::diffusion::DiffusionModel;
use crate::error::{Error, Result};
use crate::solver::{SolveReport, Verdict};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `x <= y*`: order immediately up to `z*`.
    Order,
    /// `x > y*`: continue.
    Continue,
}

/// `G(x) = c1(x, z*) + g0(z*) - F zeta(z*)` for `x <= y*`, `g0(x) - F zeta(x)` above.
#[derive(Debug, Clone)]
pub struct GSolution {
    pub y_star: f64,
    pub z_star: f64,
    pub f_star: f64,
    pub boundary_case: bool,
    chars: Characteristics,
    costs: CostModel,
}

impl GSolution {
    pub fn branch(&self, x: f64) -> Branch {
        if x <= self.y_star {
            Branch::Order
        } else {
            Branch::Continue
        }
    }

    pub fn g(&self, x: f64) -> f64 {
        let f = self.f_star;
        match self.branch(x) {
            Branch::Order => self.costs.c1(x, self.z_star) + self.chars.g0(self.z_star) - f * self.chars.zeta(self.z_star),
            Branch::Continue => self.chars.g0(x) - f * self.chars.zeta(x),
        }
    }

    pub fn g_prime(&self, x: f64) -> f64 {
        match self.branch(x) {
            Branch::Order => self.costs.dc1_dy(x),
            Branch::Continue => self.chars.g0_prime(x) - self.f_star * self.chars.zeta_prime(x),
        }
    }

    pub fn g_second(&self, x: f64) -> f64 {
        match self.branch(x) {
            Branch::Order => self.costs.d2c1_dy2(x),
            Branch::Continue => self.chars.g0_second(x) - self.f_star * self.chars.zeta_second(x),
        }
    }

    /// Jump in `G'` across `y*`.
    pub fn gluing_gap(&self) -> f64 {
        let above = self.chars.g0_prime(self.y_star) - self.f_star * self.chars.zeta_prime(self.y_star);
        above - self.costs.dc1_dy(self.y_star)
    }

    /// `AG(x) + c0(x) - F`.
    pub fn continuation_slack(&self, model: &DiffusionModel, x: f64) -> f64 {
        model.drift(x) * self.g_prime(x) + 0.5 * model.variance(x) * self.g_second(x) + self.costs.c0(x) - self.f_star
    }

    /// `G(z) - G(y) + c1(y, z)`.
    pub fn order_slack(&self, y: f64, z: f64) -> f64 {
        self.g(z) - self.g(y) + self.costs.c1(y, z)
    }

    pub fn characteristics(&self) -> &Characteristics {
        &self.chars
    }
}

/// Assemble `G` for arbitrary levels and cost without checking anything.
pub fn assemble(chars: &Characteristics, costs: &CostModel, y_star: f64, z_star: f64, f_star: f64, boundary_case: bool) -> GSolution {
    GSolution { y_star, z_star, f_star, boundary_case, chars: chars.clone(), costs: costs.clone() }
}

/// Build `G` from a solver report, rejecting an inaccurate optimum whose
/// branches do not join smoothly at `y*`.
pub fn build_g(chars: &Characteristics, costs: &CostModel, report: &SolveReport) -> Result<GSolution> {
    if let Verdict::NoMinimizer { .. } = report.verdict {
        return Err(Error::NoMinimizer("the cost has no minimiser, so there is no candidate value function".into()));
    }
    let g = assemble(chars, costs, report.y_star, report.z_star, report.f_star, report.boundary_case);
    if !report.boundary_case {
        let gap = g.gluing_gap();
        let tol = 1e-6 * (1.0 + g.costs.dc1_dy(g.y_star).abs());
        if !(gap.abs() <= tol) {
            return Err(Error::Gluing(format!("G' jumps by {gap:e} at y* = {} (tolerance {tol:e})", g.y_star)));
        }
    }
    Ok(g)
}

/// Sampling for the certificate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QviGrid {
    /// Points on each side of `y*`.
    pub points: usize,
    /// Points per axis of the triangular `(y, z)` grid.
    pub pair_points: usize,
    /// Extent beyond `[y*, z*]`, in units of its width in the natural coordinate.
    pub margin: f64,
    pub length_scale: f64,
    /// Tolerance factor; checks use `tol_factor * (1 + |F*|)`.
    pub tol_factor: f64,
}

impl Default for QviGrid {
    fn default() -> Self {
        Self { points: 200, pair_points: 120, margin: 2.0, length_scale: 1.0, tol_factor: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QviCheck {
    /// `AG + c0 - F >= 0` off `y*`.
    ContinuationInequality,
    /// `BG + c1 >= 0` for all `y < z`.
    OrderInequality,
    /// `AG + c0 - F = 0` above `y*`.
    ContinuationEquality,
    /// `BG(x, z*) + c1(x, z*) = 0` at and below `y*`.
    OrderEquality,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub check: QviCheck,
    pub x: f64,
    /// Order target for the order checks.
    pub z: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QviReport {
    pub y_star: f64,
    pub z_star: f64,
    pub f_star: f64,
    pub tolerance: f64,
    pub grid_points: usize,
    pub pair_count: usize,
    /// Smallest `AG + c0 - F` seen off `y*`.
    pub worst_continuation_slack: f64,
    /// Smallest `BG + c1` over the pair grid.
    pub worst_order_slack: f64,
    /// Largest `|AG + c0 - F|` above `y*`.
    pub continuation_equality_residual: f64,
    /// Largest `|BG(x, z*) + c1(x, z*)|` at and below `y*`.
    pub order_equality_residual: f64,
    /// Largest `|min(AG + c0 - F, min_z BG + c1)|` over the grid.
    pub combined_residual: f64,
    pub gluing_gap: f64,
    /// Whether `AG + c0` is nonincreasing below `y*`.
    pub lower_monotonicity: Check,
    pub passed: bool,
    pub witnesses: Vec<Witness>,
}

fn sample_points(g: &GSolution, grid: &QviGrid) -> (Vec<f64>, Vec<f64>) {
    let (left, right) = g.chars.domain();
    let coord = Coordinate::for_interval(left, right, grid.length_scale);
    let ty = coord.to_t(g.y_star);
    let tz = coord.to_t(g.z_star);
    let width = if ty.is_finite() { tz - ty } else { 1.0 };
    let n = grid.points.max(2);
    let mut below = Vec::new();
    if g.y_star > left {
        let t0 = ty - grid.margin * width;
        for i in 0..n {
            below.push(coord.to_x(t0 + (ty - t0) * i as f64 / n as f64));
        }
    }
    let t1 = tz + grid.margin * width;
    let t0 = if ty.is_finite() { ty } else { tz - width * grid.margin };
    let mut above = Vec::new();
    for i in 1..=n {
        let x = coord.to_x(t0 + (t1 - t0) * i as f64 / n as f64);
        if x > g.y_star && x < right {
            above.push(x);
        }
    }
    (below, above)
}

/// Check the four constraints on sampled points. Failures come back as
/// witnesses rather than errors.
pub fn verify_qvi(g: &GSolution, model: &DiffusionModel, grid: &QviGrid) -> QviReport {
    let tol = grid.tol_factor * (1.0 + g.f_star.abs());
    let (below, above) = sample_points(g, grid);
    let mut witnesses = Vec::new();
    let mut worst_cont = f64::INFINITY;
    let mut cont_eq: f64 = 0.0;
    let mut order_eq: f64 = 0.0;

    for &x in below.iter().chain(&above) {
        let s = g.continuation_slack(model, x);
        worst_cont = worst_cont.min(s);
        if !(s >= -tol) {
            witnesses.push(Witness { check: QviCheck::ContinuationInequality, x, z: None, value: s });
        }
        if x > g.y_star {
            cont_eq = cont_eq.max(s.abs());
            if !(s.abs() <= tol) {
                witnesses.push(Witness { check: QviCheck::ContinuationEquality, x, z: None, value: s });
            }
        }
    }
    let mut lower_levels = below.clone();
    lower_levels.push(g.y_star);
    if g.chars.left_closed() && g.chars.domain().0 < g.y_star {
        lower_levels.push(g.chars.domain().0);
    }
    for &x in &lower_levels {
        let r = g.order_slack(x, g.z_star);
        order_eq = order_eq.max(r.abs());
        if !(r.abs() <= tol) {
            witnesses.push(Witness { check: QviCheck::OrderEquality, x, z: Some(g.z_star), value: r });
        }
    }

    // triangular pair grid through the same range, plus y* and z* themselves
    let mut levels: Vec<f64> = below.iter().chain(&above).copied().collect();
    levels.push(g.y_star);
    levels.push(g.z_star);
    if g.chars.left_closed() {
        levels.push(g.chars.domain().0);
    }
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let stride = (levels.len() / grid.pair_points.max(2)).max(1);
    let mut axis: Vec<f64> = levels.iter().step_by(stride).copied().collect();
    for v in [g.y_star, g.z_star] {
        if !axis.contains(&v) {
            axis.push(v);
        }
    }
    axis.sort_by(f64::total_cmp);
    let mut worst_order = f64::INFINITY;
    let mut pair_count = 0;
    let mut best_order_at = vec![f64::INFINITY; axis.len()];
    for (i, &y) in axis.iter().enumerate() {
        for &z in &axis[i + 1..] {
            let r = g.order_slack(y, z);
            pair_count += 1;
            worst_order = worst_order.min(r);
            best_order_at[i] = best_order_at[i].min(r);
            if !(r >= -tol) {
                witnesses.push(Witness { check: QviCheck::OrderInequality, x: y, z: Some(z), value: r });
            }
        }
    }

    let mut combined: f64 = 0.0;
    for (i, &x) in axis.iter().enumerate() {
        if x <= g.chars.domain().0 || x == g.y_star {
            continue;
        }
        let m = g.continuation_slack(model, x).min(best_order_at[i]);
        combined = combined.max(m.abs());
    }

    let gluing_gap = if g.boundary_case { 0.0 } else { g.gluing_gap() };
    let lower_monotonicity = check_lower_monotonicity(g, model, grid);
    let passed = worst_cont >= -tol
        && worst_order >= -tol
        && cont_eq <= tol
        && order_eq <= tol
        && gluing_gap.abs() <= 1e-6 * (1.0 + g.costs.dc1_dy(g.y_star).abs());
    QviReport {
        y_star: g.y_star,
        z_star: g.z_star,
        f_star: g.f_star,
        tolerance: tol,
        grid_points: below.len() + above.len(),
        pair_count,
        worst_continuation_slack: worst_cont,
        worst_order_slack: worst_order,
        continuation_equality_residual: cont_eq,
        order_equality_residual: order_eq,
        combined_residual: combined,
        gluing_gap,
        lower_monotonicity,
        passed,
        witnesses,
    }
}

/// Whether `AG + c0` is nonincreasing below `y*`.
///
/// Vacuous when `y*` is the left end. When monotonicity fails the verdict is
/// `Indeterminate` if `AG + c0 >= F` still holds on the samples (the
/// inequality the monotonicity is meant to secure), `Fail` otherwise.
pub fn check_lower_monotonicity(g: &GSolution, model: &DiffusionModel, grid: &QviGrid) -> Check {
    let (left, right) = g.chars.domain();
    if g.boundary_case || g.y_star <= left {
        return Check::Pass;
    }
    let coord = Coordinate::for_interval(left, right, grid.length_scale);
    let ty = coord.to_t(g.y_star);
    let span = 4.0 * (coord.to_t(g.z_star) - ty).max(1.0);
    let n = grid.points.max(2);
    let tol = grid.tol_factor * (1.0 + g.f_star.abs());
    let q: Vec<f64> = (0..n)
        .map(|i| coord.to_x(ty - span + span * i as f64 / n as f64))
        .map(|x| g.continuation_slack(model, x) + g.f_star)
        .collect();
    if q.windows(2).all(|w| w[1] <= w[0] + tol) {
        Check::Pass
    } else if q.iter().all(|v| v - g.f_star >= -tol) {
        Check::Indeterminate
    } else {
        Check::Fail
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DbmParams, GbmParams};
    use crate::solver::{minimize_f, SolveOptions};

    fn dbm() -> DbmParams {
        DbmParams { mu: 1.0, sigma: 2f64.sqrt(), c_b: 1.0, c_h: 1.0, k1: 1.0, k2: 1.0, k5: None }
    }

    #[test]
    fn dbm_certificate() {
        let p = dbm();
        let ch = p.characteristics(false).unwrap();
        let costs = p.costs().unwrap();
        let r = minimize_f(&ch, &costs, &SolveOptions::default()).unwrap();
        let g = build_g(&ch, &costs, &r).unwrap();
        assert!((g.g(r.z_star) - (ch.g0(r.z_star) - r.f_star * ch.zeta(r.z_star))).abs() < 1e-14);
        assert!((g.order_slack(r.y_star, r.z_star)).abs() < 1e-9);
        let rep = verify_qvi(&g, &p.diffusion().unwrap(), &QviGrid::default());
        assert!(rep.passed, "{:?}", &rep.witnesses[..rep.witnesses.len().min(5)]);
        assert_eq!(rep.lower_monotonicity, Check::Pass);
        assert!(rep.combined_residual <= rep.tolerance);
    }

    #[test]
    fn perturbed_cost_fails() {
        let p = dbm();
        let ch = p.characteristics(false).unwrap();
        let costs = p.costs().unwrap();
        let r = minimize_f(&ch, &costs, &SolveOptions::default()).unwrap();
        let g = assemble(&ch, &costs, r.y_star, r.z_star, 1.1 * r.f_star, false);
        let rep = verify_qvi(&g, &p.diffusion().unwrap(), &QviGrid::default());
        assert!(!rep.passed);
        assert!(rep.witnesses.iter().any(|w| w.check == QviCheck::OrderInequality && w.x > r.y_star));
    }

    #[test]
    fn gbm_certificate() {
        let p = GbmParams { mu: 0.5, sigma: 1.0, k1: 1.0, k2: 1.0, k3: 1.0, k4: 1.0, beta: -1.0, eta: 1.0 };
        let ch = p.characteristics().unwrap();
        let costs = p.costs().unwrap();
        let r = minimize_f(&ch, &costs, &SolveOptions::default()).unwrap();
        let g = build_g(&ch, &costs, &r).unwrap();
        let rep = verify_qvi(&g, &p.diffusion().unwrap(), &QviGrid::default());
        assert!(rep.passed, "{:?}", &rep.witnesses[..rep.witnesses.len().min(5)]);
        assert_eq!(rep.lower_monotonicity, Check::Pass);
    }

    #[test]
    fn reflected_lower_monotonicity_is_vacuous() {
        let p = DbmParams { mu: 1.0, sigma: 1.0, c_b: 0.0, c_h: 1.0, k1: 2.0, k2: 0.5, k5: None };
        let ch = p.characteristics(true).unwrap();
        let costs = p.costs().unwrap();
        let r = minimize_f(&ch, &costs, &SolveOptions::default()).unwrap();
        let g = build_g(&ch, &costs, &r).unwrap();
        let model = p.reflected_diffusion().unwrap();
        assert_eq!(check_lower_monotonicity(&g, &model, &QviGrid::default()), Check::Pass);
        let rep = verify_qvi(&g, &model, &QviGrid::default());
        assert!(rep.passed, "{:?}", &rep.witnesses[..rep.witnesses.len().min(5)]);
    }

    #[test]
    fn inaccurate_optimum_is_rejected() {
        let p = dbm();
        let ch = p.characteristics(false).unwrap();
        let costs = p.costs().unwrap();
        let mut r = minimize_f(&ch, &costs, &SolveOptions::default()).unwrap();
        r.y_star -= 0.05;
        assert!(matches!(build_g(&ch, &costs, &r), Err(Error::Gluing(_))));
    }
}

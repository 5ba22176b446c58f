//! Long-run average cost of (s, S) policies and its minimisation.
//!
//! For levels `y < z` the renewal-reward cost is
//! `F(y, z) = (c1(y, z) + g0(z) - g0(y)) / (zeta(z) - zeta(y))`.
//! The minimiser runs Nelder–Mead from deterministic quasi-random starts in
//! an unconstrained reparameterisation (mapped lower level, log of the mapped
//! gap), searches the edge `y = a` separately when the left end is part of
//! the state space, then polishes with Newton steps on the first-order
//! conditions.

use crate::characteristics::Characteristics;
use crate::coords::Coordinate;
use crate::costs::CostModel;
use crate::diffusion::{DiffusionModel, Side};
use crate::error::{Error, Result};
use crate::optim::{halton, nelder_mead, NelderMeadOptions};
use crate::quad::integrate_vec;
use serde::{Deserialize, Serialize};

/// Expected cost and length of one ordering cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub holding: f64,
    pub ordering: f64,
    pub length: f64,
}

fn check_levels(chars: &Characteristics, y: f64, z: f64) -> Result<()> {
    let (a, b) = chars.domain();
    if !chars.contains(y) {
        return Err(Error::Domain { x: y, left: a, right: b });
    }
    if !(z > y && z < b) {
        return Err(Error::Domain { x: z, left: y, right: b });
    }
    Ok(())
}

/// Expected holding cost, ordering cost and duration of the cycle from `z` down to `y`.
pub fn expected_cycle(chars: &Characteristics, costs: &CostModel, y: f64, z: f64) -> Result<Cycle> {
    check_levels(chars, y, z)?;
    Ok(Cycle {
        holding: chars.g0(z) - chars.g0(y),
        ordering: costs.c1(y, z),
        length: chars.zeta(z) - chars.zeta(y),
    })
}

/// `F(y, z)` without validation; `NaN` when the levels are unusable.
pub fn policy_cost(chars: &Characteristics, costs: &CostModel, y: f64, z: f64) -> f64 {
    let len = chars.zeta(z) - chars.zeta(y);
    if !(len > 0.0) {
        return f64::NAN;
    }
    (costs.c1(y, z) + chars.g0(z) - chars.g0(y)) / len
}

/// Long-run behaviour of an (s, S) policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub y: f64,
    pub z: f64,
    /// Long-run average cost.
    pub cost: f64,
    /// Orders per unit time.
    pub order_frequency: f64,
    pub cycle: Cycle,
}

pub fn evaluate_policy(chars: &Characteristics, costs: &CostModel, y: f64, z: f64) -> Result<PolicyEvaluation> {
    let cycle = expected_cycle(chars, costs, y, z)?;
    if !(cycle.length > 0.0 && cycle.length.is_finite()) {
        return Err(Error::Domain { x: z, left: y, right: chars.domain().1 });
    }
    Ok(PolicyEvaluation {
        y,
        z,
        cost: (cycle.ordering + cycle.holding) / cycle.length,
        order_frequency: 1.0 / cycle.length,
        cycle,
    })
}

/// Stationary law of the inventory level under an (s, S) policy:
/// `2 kappa m(x) S[y, min(x, z)]` for `x > y`, zero below.
#[derive(Debug, Clone)]
pub struct StationaryDensity {
    model: DiffusionModel,
    y: f64,
    z: f64,
    kappa: f64,
}

impl StationaryDensity {
    pub fn new(model: &DiffusionModel, eval: &PolicyEvaluation) -> Self {
        Self { model: model.clone(), y: eval.y, z: eval.z, kappa: eval.order_frequency }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x <= self.y || x >= self.model.right() {
            return 0.0;
        }
        let top = x.min(self.z);
        let m = &self.model;
        let s = integrate_vec(|u| [m.log_scale_between(u, x).exp()], self.y, top, m.quad_options()).value[0];
        2.0 * self.kappa * s / m.variance(x)
    }

    /// Distribution function at each point of an increasing sequence.
    pub fn cdf_many(&self, xs: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(xs.len());
        let mut acc = 0.0;
        let mut prev = self.y;
        let q = self.model.quad_options();
        for &x in xs {
            if x > prev {
                acc += self.mass_between(prev, x, q);
                prev = x;
            }
            out.push(acc);
        }
        out
    }

    fn mass_between(&self, lo: f64, hi: f64, q: crate::quad::QuadOptions) -> f64 {
        // split at z where the density has a kink
        if lo < self.z && hi > self.z {
            return self.mass_between(lo, self.z, q) + self.mass_between(self.z, hi, q);
        }
        integrate_vec(|x| [self.pdf(x)], lo, hi, q).value[0]
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.cdf_many(&[x])[0]
    }

    /// Total mass, integrated out to the right boundary.
    pub fn total_mass(&self) -> f64 {
        let body = self.cdf(self.z);
        let tail = self.model.integrate_out(|x| self.pdf(x), self.z, Side::Right).to_f64();
        body + tail
    }
}

/// Minimiser settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub starts: usize,
    pub max_iter: usize,
    /// Box from which start points are drawn (defaults around the anchor).
    pub search_lo: Option<f64>,
    pub search_hi: Option<f64>,
    pub length_scale: f64,
    pub polish: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { starts: 16, max_iter: 4000, search_lo: None, search_hi: None, length_scale: 1.0, polish: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Minimizer,
    /// The infimum is approached only as a level runs into a boundary.
    NoMinimizer { boundary: Side, infimum_estimate: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StartTrace {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub y_star: f64,
    pub z_star: f64,
    pub f_star: f64,
    /// The lower level sits on the left boundary.
    pub boundary_case: bool,
    /// `[(H'(y) + g0'(y)) / zeta'(y) - F, (H'(z) + g0'(z)) / zeta'(z) - F]`.
    /// In the boundary case the first entry need only be nonpositive.
    pub foc_residual: [f64; 2],
    /// `d^2 c1/dy^2 - g0''(y*) + F* zeta''(y*)`; absent in the boundary case.
    pub soc_value: Option<f64>,
    pub iterations: usize,
    pub verdict: Verdict,
    pub trace: Vec<StartTrace>,
}

/// First-order residuals at `(y, z)` against the cost `f`.
pub fn first_order_residuals(chars: &Characteristics, costs: &CostModel, y: f64, z: f64, f: f64) -> [f64; 2] {
    [
        (costs.h_prime(y) + chars.g0_prime(y)) / chars.zeta_prime(y) - f,
        (costs.h_prime(z) + chars.g0_prime(z)) / chars.zeta_prime(z) - f,
    ]
}

/// Second-order quantity in the lower level; nonnegative at a minimiser.
pub fn second_order_value(chars: &Characteristics, costs: &CostModel, y: f64, f: f64) -> f64 {
    costs.d2c1_dy2(y) - chars.g0_second(y) + f * chars.zeta_second(y)
}

struct Problem<'a> {
    chars: &'a Characteristics,
    costs: &'a CostModel,
    coord: Coordinate,
    left: f64,
    right: f64,
    anchor: f64,
    scale: f64,
}

impl Problem<'_> {
    fn cost(&self, y: f64, z: f64) -> f64 {
        if !(y >= self.left && z > y && z < self.right) || (y == self.left && !self.chars.left_closed()) {
            return f64::INFINITY;
        }
        let v = policy_cost(self.chars, self.costs, y, z);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }

    fn levels(&self, p: &[f64]) -> (f64, f64) {
        let y = self.coord.to_x(p[0]);
        let z = self.coord.to_x(p[0] + p[1].exp());
        (y, z)
    }

    fn objective(&self, p: &[f64]) -> f64 {
        let (y, z) = self.levels(p);
        if !(y > self.left) {
            return f64::INFINITY;
        }
        self.cost(y, z)
    }

    fn near_left(&self, y: f64) -> bool {
        if self.left.is_finite() {
            y - self.left < 1e-6 * (self.anchor - self.left)
        } else {
            y < self.anchor - 1e6 * self.scale
        }
    }

    fn near_right(&self, z: f64) -> bool {
        if self.right.is_finite() {
            self.right - z < 1e-6 * (self.right - self.anchor)
        } else {
            z > self.anchor + 1e6 * self.scale
        }
    }

    fn left_threshold(&self) -> f64 {
        if self.left.is_finite() {
            self.left + 1e-6 * (self.anchor - self.left)
        } else {
            self.anchor - 1e6 * self.scale
        }
    }

    fn right_threshold(&self) -> f64 {
        if self.right.is_finite() {
            self.right - 1e-6 * (self.right - self.anchor)
        } else {
            self.anchor + 1e6 * self.scale
        }
    }

    fn residuals(&self, y: f64, z: f64) -> [f64; 2] {
        first_order_residuals(self.chars, self.costs, y, z, self.cost(y, z))
    }

    fn step(&self, x: f64) -> f64 {
        let base = if self.left.is_finite() { (x - self.left).abs().min(x.abs().max(1e-3 * self.scale)) } else { x.abs() };
        1e-6 * (base + 1e-3 * self.scale)
    }

    /// Newton iterations on both first-order conditions.
    fn polish_interior(&self, mut y: f64, mut z: f64) -> (f64, f64) {
        let norm = |r: [f64; 2]| r[0].abs().max(r[1].abs());
        let mut r = self.residuals(y, z);
        for _ in 0..40 {
            if !(norm(r).is_finite()) || norm(r) <= 1e-14 * (1.0 + self.cost(y, z).abs()) {
                break;
            }
            let (hy, hz) = (self.step(y), self.step(z));
            let ry = [self.residuals(y + hy, z), self.residuals(y - hy, z)];
            let rz = [self.residuals(y, z + hz), self.residuals(y, z - hz)];
            let j = [
                [(ry[0][0] - ry[1][0]) / (2.0 * hy), (rz[0][0] - rz[1][0]) / (2.0 * hz)],
                [(ry[0][1] - ry[1][1]) / (2.0 * hy), (rz[0][1] - rz[1][1]) / (2.0 * hz)],
            ];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if !(det.is_finite() && det != 0.0) {
                break;
            }
            let dy = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
            let dz = (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..30 {
                let (ny, nz) = (y - t * dy, z - t * dz);
                if ny > self.left && nz > ny && nz < self.right {
                    let nr = self.residuals(ny, nz);
                    if norm(nr) < norm(r) {
                        y = ny;
                        z = nz;
                        r = nr;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        (y, z)
    }

    /// Newton iterations on the upper condition with the lower level fixed.
    fn polish_upper(&self, y: f64, mut z: f64) -> f64 {
        let mut r = self.residuals(y, z)[1];
        for _ in 0..40 {
            if !r.is_finite() || r.abs() <= 1e-14 * (1.0 + self.cost(y, z).abs()) {
                break;
            }
            let h = self.step(z);
            let d = (self.residuals(y, z + h)[1] - self.residuals(y, z - h)[1]) / (2.0 * h);
            if !(d.is_finite() && d != 0.0) {
                break;
            }
            let dz = r / d;
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..30 {
                let nz = z - t * dz;
                if nz > y && nz < self.right {
                    let nr = self.residuals(y, nz)[1];
                    if nr.abs() < r.abs() {
                        z = nz;
                        r = nr;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        z
    }
}

fn default_box(left: f64, right: f64, anchor: f64, scale: f64) -> (f64, f64) {
    let lo = if left.is_finite() { left + (anchor - left) * 1e-2 } else { anchor - 10.0 * scale };
    let hi = if right.is_finite() { right - (right - anchor) * 1e-2 } else { anchor + 10.0 * scale };
    (lo, hi)
}

/// Minimise `F` over admissible pairs `y < z`.
pub fn minimize_f(chars: &Characteristics, costs: &CostModel, opts: &SolveOptions) -> Result<SolveReport> {
    let (left, right) = chars.domain();
    let anchor = chars.anchor();
    let scale = opts.length_scale;
    // closed forms may be anchored on the boundary; keep the search anchor interior
    let anchor = if anchor > left && anchor < right {
        anchor
    } else if right.is_finite() {
        0.5 * (left + right)
    } else {
        left + scale
    };
    let coord = Coordinate::for_interval(left, right, scale);
    let p = Problem { chars, costs, coord, left, right, anchor, scale };
    let (dlo, dhi) = default_box(left, right, anchor, scale);
    let lo = opts.search_lo.unwrap_or(dlo);
    let hi = opts.search_hi.unwrap_or(dhi);
    if !(lo < hi && lo > left && hi < right) {
        return Err(Error::Config(format!("search box [{lo}, {hi}] must lie inside ({left}, {right})")));
    }
    let (t0, t1) = (coord.to_t(lo), coord.to_t(hi));
    let width = t1 - t0;
    let nm = NelderMeadOptions { max_iter: opts.max_iter, initial_step: 0.1 * width.max(1e-3), ..Default::default() };

    let mut trace = Vec::new();
    let mut iterations = 0usize;
    let mut best: Option<(f64, f64, f64)> = None;
    for k in 1..=opts.starts.max(1) {
        let a = t0 + halton(k, 2) * width;
        let b = t0 + halton(k, 3) * width;
        let (u, w) = if a < b { (a, b) } else { (b, a) };
        let gap = (w - u).max(1e-3 * width);
        let x0 = [u, gap.ln()];
        let r1 = nelder_mead(|q| p.objective(q), &x0, nm);
        let r2 = nelder_mead(|q| p.objective(q), &r1.xmin, NelderMeadOptions { initial_step: 0.01 * width.max(1e-3), ..nm });
        let r = if r2.fmin <= r1.fmin { r2.clone() } else { r1.clone() };
        iterations += r1.iters + r2.iters;
        let (y, z) = p.levels(&r.xmin);
        let (sy, sz) = p.levels(&x0);
        trace.push(StartTrace { start: [sy, sz], end: [y, z], cost: r.fmin, iterations: r1.iters + r2.iters, converged: r2.converged });
        if r.fmin.is_finite() && best.map_or(true, |b| r.fmin < b.2) {
            best = Some((y, z, r.fmin));
        }
    }
    let Some((mut y, mut z, mut f)) = best else {
        return Err(Error::NonConvergence { starts: trace.len(), detail: "no start reached a finite cost".into() });
    };

    // Edge search along y = a.
    let mut boundary_case = false;
    if chars.left_closed() {
        let mut edge: Option<(f64, f64)> = None;
        for k in 1..=4 {
            let w0 = t0 + halton(k, 2) * width;
            let r = nelder_mead(
                |q| p.cost(left, coord.to_x(q[0])),
                &[w0],
                NelderMeadOptions { initial_step: 0.1 * width.max(1e-3), ..nm },
            );
            iterations += r.iters;
            let ze = coord.to_x(r.xmin[0]);
            if r.fmin.is_finite() && edge.map_or(true, |e| r.fmin < e.1) {
                edge = Some((ze, r.fmin));
            }
        }
        if let Some((ze, fe)) = edge {
            let interior_at_edge = y - left < 1e-6 * (anchor - left).abs().max(scale);
            if fe <= f + 1e-9 * f.abs() || interior_at_edge {
                y = left;
                z = ze;
                f = fe;
                boundary_case = true;
            }
        }
    }

    // Infimum approached only at an unattainable boundary.
    if !boundary_case {
        let drift = if !chars.left_closed() && p.near_left(y) {
            Some((Side::Left, p.left_threshold(), z))
        } else if p.near_right(z) {
            Some((Side::Right, y, p.right_threshold()))
        } else {
            None
        };
        if let Some((side, ty, tz)) = drift {
            let f_thr = p.cost(ty, tz);
            if !(f_thr.is_finite()) || f < 0.99 * f_thr {
                let (w1, w2) = match side {
                    Side::Left => ((coord.to_t(ty) - coord.to_t(anchor)).abs(), (coord.to_t(y) - coord.to_t(anchor)).abs()),
                    Side::Right => ((coord.to_t(tz) - coord.to_t(anchor)).abs(), (coord.to_t(z) - coord.to_t(anchor)).abs()),
                };
                let extrapolated = if f_thr.is_finite() && w2 > w1 { (w2 * f - w1 * f_thr) / (w2 - w1) } else { f };
                let infimum_estimate = extrapolated.clamp(0.0f64.min(f), f);
                return Ok(SolveReport {
                    y_star: y,
                    z_star: z,
                    f_star: f,
                    boundary_case: false,
                    foc_residual: [f64::NAN, f64::NAN],
                    soc_value: None,
                    iterations,
                    verdict: Verdict::NoMinimizer { boundary: side, infimum_estimate },
                    trace,
                });
            }
        }
    }

    if !trace.iter().any(|t| t.converged) {
        return Err(Error::NonConvergence {
            starts: trace.len(),
            detail: format!("best point ({y}, {z}) with cost {f} did not meet the simplex tolerance"),
        });
    }

    if opts.polish {
        if boundary_case {
            let nz = p.polish_upper(y, z);
            let nf = p.cost(y, nz);
            if nf <= f * (1.0 + 1e-12) + 1e-300 {
                z = nz;
                f = nf.min(f);
            }
        } else {
            let (ny, nz) = p.polish_interior(y, z);
            let nf = p.cost(ny, nz);
            if nf <= f * (1.0 + 1e-12) + 1e-300 {
                y = ny;
                z = nz;
                f = nf.min(f);
            }
        }
    }
    let f_here = p.cost(y, z);
    let f = f.min(f_here);
    let foc_residual = first_order_residuals(chars, costs, y, z, f);
    let soc_value = if boundary_case { None } else { Some(second_order_value(chars, costs, y, f)) };
    Ok(SolveReport { y_star: y, z_star: z, f_star: f, boundary_case, foc_residual, soc_value, iterations, verdict: Verdict::Minimizer, trace })
}

/// `F` on a grid of `(y, z)` pairs; entries with `y >= z` are `NaN`.
pub fn f_surface(chars: &Characteristics, costs: &CostModel, ys: &[f64], zs: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::with_capacity(ys.len() * zs.len());
    for &y in ys {
        for &z in zs {
            let v = if y < z && chars.contains(y) && z < chars.domain().1 { policy_cost(chars, costs, y, z) } else { f64::NAN };
            out.push((y, z, v));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{reflected_optimum, DbmParams, GbmParams};

    #[test]
    fn reflected_boundary_optimum() {
        let p = DbmParams { mu: 1.0, sigma: 1.0, c_b: 0.0, c_h: 1.0, k1: 2.0, k2: 0.5, k5: None };
        let ch = p.characteristics(true).unwrap();
        let costs = p.costs().unwrap();
        let r = minimize_f(&ch, &costs, &SolveOptions::default()).unwrap();
        let (y, z, f) = reflected_optimum(&p);
        assert!(r.boundary_case);
        assert_eq!(r.y_star, y);
        assert!((r.z_star - z).abs() < 1e-8 * z, "{r:?}");
        assert!((r.f_star - f).abs() < 1e-10 * f);
        assert!(r.foc_residual[0] <= 0.0);
        assert!(r.foc_residual[1].abs() < 1e-9);
    }

    #[test]
    fn dbm_interior_optimum() {
        let p = DbmParams { mu: 1.0, sigma: 2f64.sqrt(), c_b: 1.0, c_h: 1.0, k1: 1.0, k2: 1.0, k5: None };
        let ch = p.characteristics(false).unwrap();
        let costs = p.costs().unwrap();
        let r = minimize_f(&ch, &costs, &SolveOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Minimizer);
        assert!(!r.boundary_case);
        assert!(r.y_star < p.threshold() && p.threshold() < r.z_star && r.y_star < 0.0);
        // both first-order conditions reduce to F* = mu (k2 + g0'(level))
        let g = crate::models::DbmCharacteristics { p };
        use crate::characteristics::CharacteristicFns;
        for lvl in [r.y_star, r.z_star] {
            assert!((r.f_star - p.mu * (p.k2 + g.g0_prime(lvl))).abs() < 1e-9 * r.f_star);
        }
        assert!(r.soc_value.unwrap() >= 0.0);
    }

    #[test]
    fn gbm_interior_optimum() {
        let p = GbmParams { mu: 0.5, sigma: 1.0, k1: 1.0, k2: 1.0, k3: 1.0, k4: 1.0, beta: -1.0, eta: 0.5 };
        let ch = p.characteristics().unwrap();
        let r = minimize_f(&ch, &p.costs().unwrap(), &SolveOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Minimizer);
        let xhat = crate::models::gbm_level_minimizer(&p).unwrap();
        assert!(r.y_star < xhat && xhat < r.z_star);
        let k = p.mu + 0.5 * p.sigma * p.sigma;
        let hy = k * crate::models::gbm_level_function(&p, r.y_star);
        let hz = k * crate::models::gbm_level_function(&p, r.z_star);
        assert!((hy - r.f_star).abs() < 1e-9 * r.f_star && (hz - r.f_star).abs() < 1e-9 * r.f_star);
    }

    #[test]
    fn cycle_and_evaluation() {
        let p = GbmParams { mu: 0.5, sigma: 1.0, k1: 1.0, k2: 1.0, k3: 1.0, k4: 1.0, beta: -1.0, eta: 1.0 };
        let ch = p.characteristics().unwrap();
        let c = expected_cycle(&ch, &p.costs().unwrap(), 1.0, std::f64::consts::E).unwrap();
        assert!((c.length - 1.0).abs() < 1e-15);
        let d = DbmParams { mu: 1.0, sigma: 2f64.sqrt(), c_b: 1.0, c_h: 1.0, k1: 1.0, k2: 0.0, k5: None };
        let e = evaluate_policy(&d.characteristics(false).unwrap(), &d.costs().unwrap(), 0.0, 1.0).unwrap();
        assert!((e.order_frequency - 1.0).abs() < 1e-15);
        assert!((e.cost - 2.5).abs() < 1e-14);
        assert!(evaluate_policy(&d.characteristics(false).unwrap(), &d.costs().unwrap(), 1.0, 1.0).is_err());
    }

    #[test]
    fn stationary_density_normalised() {
        let d = DbmParams { mu: 1.0, sigma: 2f64.sqrt(), c_b: 1.0, c_h: 1.0, k1: 1.0, k2: 0.0, k5: None };
        let e = evaluate_policy(&d.characteristics(false).unwrap(), &d.costs().unwrap(), 0.0, 1.0).unwrap();
        let sd = StationaryDensity::new(&d.diffusion().unwrap(), &e);
        assert!((sd.total_mass() - 1.0).abs() < 1e-8);
        for &x in &[-0.5, 0.3, 0.9, 1.5, 4.0] {
            let exact = crate::models::dbm_stationary_density(&d, 0.0, 1.0, x);
            assert!((sd.pdf(x) - exact).abs() < 1e-10, "{x}");
        }
    }
}

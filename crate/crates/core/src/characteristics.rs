//! The cost potential `g0` and the cycle-time potential `zeta`.
//!
//! `g0(x) = int_C^x 2 s(u) int_u^b c0 dM du` and
//! `zeta(x) = int_C^x 2 s(u) M[u, b) du`. For an (s, S) pair the expected
//! holding cost of one cycle is `g0(z) - g0(y)` and its expected length
//! `zeta(z) - zeta(y)`.
//!
//! Builtin models supply closed forms. Anything else is tabulated by
//! quadrature: node values are exact up to quadrature error, values between
//! nodes come from cubic Hermite interpolation with exact node slopes, and the
//! node density is doubled until midpoint probes agree with direct quadrature.
//! First derivatives are always evaluated from their integral representation.

use crate::coords::Coordinate;
use crate::costs::CostModel;
use crate::diffusion::{default_step, DiffusionModel, Side};
use crate::error::{Error, Result};
use crate::quad::integrate_vec;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

/// Pointwise access to the characteristic functions.
pub trait CharacteristicFns: Send + Sync {
    fn g0(&self, x: f64) -> f64;
    fn zeta(&self, x: f64) -> f64;
    fn g0_prime(&self, x: f64) -> f64;
    fn zeta_prime(&self, x: f64) -> f64;

    fn g0_second(&self, x: f64) -> f64 {
        let h = default_step(x);
        (self.g0_prime(x + h) - self.g0_prime(x - h)) / (2.0 * h)
    }

    fn zeta_second(&self, x: f64) -> f64 {
        let h = default_step(x);
        (self.zeta_prime(x + h) - self.zeta_prime(x - h)) / (2.0 * h)
    }
}

/// How the functions are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    ClosedForm,
    Quadrature,
    /// Loaded from an exported table.
    Table,
}

/// `g0`, `zeta` and their derivatives on a model's state space.
#[derive(Clone)]
pub struct Characteristics {
    fns: Arc<dyn CharacteristicFns>,
    mode: EvalMode,
    anchor: f64,
    left: f64,
    right: f64,
    left_closed: bool,
    nodes: Option<Arc<Vec<f64>>>,
}

impl fmt::Debug for Characteristics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Characteristics")
            .field("mode", &self.mode)
            .field("anchor", &self.anchor)
            .field("domain", &(self.left, self.right))
            .field("left_closed", &self.left_closed)
            .finish()
    }
}

impl Characteristics {
    /// Wrap closed-form functions.
    pub fn closed_form(
        fns: Arc<dyn CharacteristicFns>,
        anchor: f64,
        left: f64,
        right: f64,
        left_closed: bool,
    ) -> Self {
        Self { fns, mode: EvalMode::ClosedForm, anchor, left, right, left_closed, nodes: None }
    }

    pub fn mode(&self) -> EvalMode {
        self.mode
    }
    pub fn anchor(&self) -> f64 {
        self.anchor
    }
    pub fn domain(&self) -> (f64, f64) {
        (self.left, self.right)
    }
    /// The left end belongs to the state space (reached and left again).
    pub fn left_closed(&self) -> bool {
        self.left_closed
    }
    /// Tabulation nodes, when the functions come from a table.
    pub fn nodes(&self) -> Option<&[f64]> {
        self.nodes.as_deref().map(|v| v.as_slice())
    }

    /// Inside the state space.
    pub fn contains(&self, x: f64) -> bool {
        (x > self.left || (self.left_closed && x == self.left)) && x < self.right
    }

    pub fn g0(&self, x: f64) -> f64 {
        self.fns.g0(x)
    }
    pub fn zeta(&self, x: f64) -> f64 {
        self.fns.zeta(x)
    }
    pub fn g0_prime(&self, x: f64) -> f64 {
        self.fns.g0_prime(x)
    }
    pub fn zeta_prime(&self, x: f64) -> f64 {
        self.fns.zeta_prime(x)
    }
    pub fn g0_second(&self, x: f64) -> f64 {
        self.fns.g0_second(x)
    }
    pub fn zeta_second(&self, x: f64) -> f64 {
        self.fns.zeta_second(x)
    }
}

/// Node placement and refinement for tabulation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    /// Lower end of the tabulated range (default: derived from the model).
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub initial_nodes: usize,
    /// Relative interpolation error allowed at cell midpoints.
    pub tol: f64,
    pub max_nodes: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { lo: None, hi: None, initial_nodes: 64, tol: 1e-10, max_nodes: 1 << 14 }
    }
}

impl GridSpec {
    pub fn range(&self, model: &DiffusionModel) -> (f64, f64) {
        let (a, b, c, l) = (model.left(), model.right(), model.anchor(), model.length_scale());
        let lo = self.lo.unwrap_or(if a.is_finite() { a + (c - a) * 1e-4 } else { c - 40.0 * l });
        let hi = self.hi.unwrap_or(if b.is_finite() { b - (b - c) * 1e-4 } else { c + 40.0 * l });
        (lo.min(c), hi.max(c))
    }
}

/// Tabulation diagnostics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TableInfo {
    pub nodes: usize,
    pub max_probe_error: f64,
    pub converged: bool,
    pub lo: f64,
    pub hi: f64,
}

struct Tabulated {
    model: DiffusionModel,
    c0: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    x: Vec<f64>,
    /// `[s(x_i) int_{x_i}^b c0 dM, s(x_i) M[x_i, b)]`
    tail: Vec<[f64; 2]>,
    /// `[g0(x_i), zeta(x_i)]`
    val: Vec<[f64; 2]>,
}

impl Tabulated {
    fn build(model: &DiffusionModel, c0: Arc<dyn Fn(f64) -> f64 + Send + Sync>, x: Vec<f64>, anchor_idx: usize) -> Result<Self> {
        let n = x.len();
        let q = model.quad_options();
        let mut phi = vec![0.0; n];
        for i in anchor_idx + 1..n {
            phi[i] = phi[i - 1] + model.log_scale_between(x[i - 1], x[i]);
        }
        for i in (0..anchor_idx).rev() {
            phi[i] = phi[i + 1] - model.log_scale_between(x[i], x[i + 1]);
        }
        let last = x[n - 1];
        let tc = model.relative_speed_tail(|v| c0(v), last, Side::Right);
        let t1 = model.relative_speed_tail(|_| 1.0, last, Side::Right);
        let (tc, t1) = match (tc.finite(), t1.finite()) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::Divergent {
                    what: "holding cost integral against the speed measure toward the right boundary".into(),
                })
            }
        };
        let mut tail = vec![[0.0; 2]; n];
        tail[n - 1] = [tc, t1];
        for i in (0..n - 1).rev() {
            let (xi, xj) = (x[i], x[i + 1]);
            let cell = integrate_vec(
                |v| {
                    let w = model.log_scale_between(xi, v).exp() / model.variance(v);
                    [c0(v) * w, w]
                },
                xi,
                xj,
                q,
            )
            .value;
            let f = (phi[i + 1] - phi[i]).exp();
            tail[i] = [cell[0] + f * tail[i + 1][0], cell[1] + f * tail[i + 1][1]];
        }
        let mut t = Self { model: model.clone(), c0, x, tail, val: vec![[0.0; 2]; n] };
        for i in anchor_idx + 1..n {
            let inc = t.cell_integral(i - 1, t.x[i]);
            t.val[i] = [t.val[i - 1][0] + inc[0], t.val[i - 1][1] + inc[1]];
        }
        for i in (0..anchor_idx).rev() {
            let inc = t.cell_integral(i, t.x[i + 1]);
            t.val[i] = [t.val[i + 1][0] - inc[0], t.val[i + 1][1] - inc[1]];
        }
        Ok(t)
    }

    /// `[g0', zeta'] / 2` at `u`, using node `j >= u` as the reference.
    fn half_slopes_from(&self, u: f64, j: usize) -> [f64; 2] {
        let xj = self.x[j];
        if u == xj {
            return self.tail[j];
        }
        let m = &self.model;
        let c0 = &self.c0;
        let local = integrate_vec(
            |v| {
                let w = m.log_scale_between(u, v).exp() / m.variance(v);
                [c0(v) * w, w]
            },
            u,
            xj,
            m.quad_options(),
        )
        .value;
        let f = m.log_scale_between(u, xj).exp();
        [local[0] + f * self.tail[j][0], local[1] + f * self.tail[j][1]]
    }

    fn half_slopes(&self, u: f64) -> [f64; 2] {
        let n = self.x.len();
        if u > self.x[n - 1] {
            let c0 = &self.c0;
            let a = self.model.relative_speed_tail(|v| c0(v), u, Side::Right).to_f64();
            let b = self.model.relative_speed_tail(|_| 1.0, u, Side::Right).to_f64();
            return [a, b];
        }
        let j = self.x.partition_point(|&xi| xi < u);
        self.half_slopes_from(u, j)
    }

    /// `[g0, zeta](to) - [g0, zeta](x_i)` for `to` in cell `i`.
    fn cell_integral(&self, i: usize, to: f64) -> [f64; 2] {
        let j = (i + 1).min(self.x.len() - 1);
        let r = integrate_vec(
            |u| {
                let h = self.half_slopes_from(u, j);
                [2.0 * h[0], 2.0 * h[1]]
            },
            self.x[i],
            to,
            self.model.quad_options(),
        );
        r.value
    }

    /// Exact `[g0, zeta]` by quadrature from the nearest node below.
    fn values_exact(&self, x: f64) -> [f64; 2] {
        let n = self.x.len();
        if x < self.x[0] {
            let r = integrate_vec(
                |u| {
                    let h = self.half_slopes_from(u, 0);
                    [2.0 * h[0], 2.0 * h[1]]
                },
                x,
                self.x[0],
                self.model.quad_options(),
            )
            .value;
            return [self.val[0][0] - r[0], self.val[0][1] - r[1]];
        }
        if x > self.x[n - 1] {
            let r = integrate_vec(
                |u| {
                    let h = self.half_slopes(u);
                    [2.0 * h[0], 2.0 * h[1]]
                },
                self.x[n - 1],
                x,
                self.model.quad_options(),
            )
            .value;
            return [self.val[n - 1][0] + r[0], self.val[n - 1][1] + r[1]];
        }
        let i = self.x.partition_point(|&xi| xi <= x).saturating_sub(1).min(n - 2);
        let inc = self.cell_integral(i, x);
        [self.val[i][0] + inc[0], self.val[i][1] + inc[1]]
    }

    fn hermite(&self, x: f64, k: usize) -> Option<f64> {
        let n = self.x.len();
        if !(x >= self.x[0] && x <= self.x[n - 1]) {
            return None;
        }
        let i = self.x.partition_point(|&xi| xi <= x).saturating_sub(1).min(n - 2);
        Some(hermite(
            self.x[i],
            self.x[i + 1],
            self.val[i][k],
            self.val[i + 1][k],
            2.0 * self.tail[i][k],
            2.0 * self.tail[i + 1][k],
            x,
        ))
    }
}

fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, m0: f64, m1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * h * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * h * m1
}

fn hermite_slope(x0: f64, x1: f64, y0: f64, y1: f64, m0: f64, m1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    ((6.0 * t2 - 6.0 * t) * y0 + (-6.0 * t2 + 6.0 * t) * y1) / h
        + (3.0 * t2 - 4.0 * t + 1.0) * m0
        + (3.0 * t2 - 2.0 * t) * m1
}

impl CharacteristicFns for Tabulated {
    fn g0(&self, x: f64) -> f64 {
        self.hermite(x, 0).unwrap_or_else(|| self.values_exact(x)[0])
    }
    fn zeta(&self, x: f64) -> f64 {
        self.hermite(x, 1).unwrap_or_else(|| self.values_exact(x)[1])
    }
    fn g0_prime(&self, x: f64) -> f64 {
        2.0 * self.half_slopes(x)[0]
    }
    fn zeta_prime(&self, x: f64) -> f64 {
        2.0 * self.half_slopes(x)[1]
    }
    fn g0_second(&self, x: f64) -> f64 {
        let h = self.second_step(x);
        (self.g0_prime(x + h) - self.g0_prime(x - h)) / (2.0 * h)
    }
    fn zeta_second(&self, x: f64) -> f64 {
        let h = self.second_step(x);
        (self.zeta_prime(x + h) - self.zeta_prime(x - h)) / (2.0 * h)
    }
}

impl Tabulated {
    fn second_step(&self, x: f64) -> f64 {
        let mut h = default_step(x);
        let a = self.model.left();
        if x - h <= a {
            h = 0.5 * (x - a);
        }
        h
    }
}

fn node_grid(coord: Coordinate, lo: f64, hi: f64, cells: usize, anchor: f64, left_point: Option<f64>) -> (Vec<f64>, usize) {
    let (t0, t1) = (coord.to_t(lo), coord.to_t(hi));
    let mut xs: Vec<f64> = (0..=cells).map(|k| coord.to_x(t0 + (t1 - t0) * k as f64 / cells as f64)).collect();
    xs[0] = lo;
    xs[cells] = hi;
    let dt = (t1 - t0) / cells as f64;
    let ta = coord.to_t(anchor);
    let k = (((ta - t0) / dt).round() as isize).clamp(0, cells as isize) as usize;
    if ((ta - coord.to_t(xs[k])) / dt).abs() < 0.25 {
        xs[k] = anchor;
    } else {
        xs.push(anchor);
        xs.sort_by(f64::total_cmp);
    }
    if let Some(a) = left_point {
        if a < xs[0] {
            xs.insert(0, a);
        }
    }
    xs.dedup();
    let idx = xs.iter().position(|&v| v == anchor).expect("anchor node");
    (xs, idx)
}

/// Tabulate `g0` and `zeta` by quadrature.
///
/// Fails with [`Error::Divergent`] when `int c0 dM` toward the right boundary
/// is infinite.
pub fn build_characteristics(model: &DiffusionModel, costs: &CostModel, grid: &GridSpec) -> Result<(Characteristics, TableInfo)> {
    let bounds = model.classify_boundaries()?;
    let left_closed = bounds.left.attainable;
    let costs = costs.clone();
    let c0: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(move |x| costs.c0(x));
    let (lo, hi) = grid.range(model);
    let coord = Coordinate::for_interval(model.left(), model.right(), model.length_scale());
    let left_point = if left_closed { Some(model.left()) } else { None };
    let reach = |x: f64| {
        let l = model.length_scale();
        l.min(x - model.left()).min(model.right() - x)
    };
    let mut cells = grid.initial_nodes.max(4);
    loop {
        let (xs, anchor_idx) = node_grid(coord, lo, hi, cells, model.anchor(), left_point);
        let tab = Tabulated::build(model, c0.clone(), xs, anchor_idx)?;
        let scale = tab.val.iter().map(|v| v[0].abs().max(v[1].abs())).fold(0.0, f64::max).max(1e-300);
        let mut worst: f64 = 0.0;
        for i in 0..tab.x.len() - 1 {
            let (a, b) = (tab.x[i], tab.x[i + 1]);
            let mid = coord.to_x(0.5 * (coord.to_t(a) + coord.to_t(b)));
            let mid = if mid > a && mid < b { mid } else { 0.5 * (a + b) };
            let exact = tab.values_exact(mid);
            for k in 0..2 {
                let approx = tab.hermite(mid, k).unwrap_or(exact[k]);
                // near zero crossings measure against the change over a length scale
                let slope = 2.0 * tab.tail[i][k].abs().max(tab.tail[i + 1][k].abs());
                let denom = exact[k].abs().max(slope * reach(mid)).max(1e-12 * scale);
                worst = worst.max((approx - exact[k]).abs() / denom);
            }
        }
        let done = worst <= grid.tol;
        if done || 2 * cells > grid.max_nodes {
            let info = TableInfo { nodes: tab.x.len(), max_probe_error: worst, converged: done, lo, hi };
            let nodes = Arc::new(tab.x.clone());
            let chars = Characteristics {
                fns: Arc::new(tab),
                mode: EvalMode::Quadrature,
                anchor: model.anchor(),
                left: model.left(),
                right: model.right(),
                left_closed,
                nodes: Some(nodes),
            };
            return Ok((chars, info));
        }
        cells *= 2;
    }
}

struct ImportedTable {
    x: Vec<f64>,
    g: Vec<[f64; 4]>,
}

impl ImportedTable {
    fn locate(&self, x: f64) -> Option<usize> {
        let n = self.x.len();
        if !(x >= self.x[0] && x <= self.x[n - 1]) {
            return None;
        }
        Some(self.x.partition_point(|&xi| xi <= x).saturating_sub(1).min(n - 2))
    }

    fn value(&self, x: f64, k: usize) -> f64 {
        match self.locate(x) {
            Some(i) => hermite(self.x[i], self.x[i + 1], self.g[i][k], self.g[i + 1][k], self.g[i][k + 2], self.g[i + 1][k + 2], x),
            None => f64::NAN,
        }
    }

    fn slope(&self, x: f64, k: usize) -> f64 {
        match self.locate(x) {
            Some(i) => {
                hermite_slope(self.x[i], self.x[i + 1], self.g[i][k], self.g[i + 1][k], self.g[i][k + 2], self.g[i + 1][k + 2], x)
            }
            None => f64::NAN,
        }
    }
}

impl CharacteristicFns for ImportedTable {
    fn g0(&self, x: f64) -> f64 {
        self.value(x, 0)
    }
    fn zeta(&self, x: f64) -> f64 {
        self.value(x, 1)
    }
    fn g0_prime(&self, x: f64) -> f64 {
        self.slope(x, 0)
    }
    fn zeta_prime(&self, x: f64) -> f64 {
        self.slope(x, 1)
    }
}

/// Format with 17 significant digits.
pub fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write `x, g0, zeta, g0_prime, zeta_prime` rows at the given points.
pub fn export_csv<W: Write>(chars: &Characteristics, xs: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "g0", "zeta", "g0_prime", "zeta_prime"])?;
    for &x in xs {
        w.write_record([sci(x), sci(chars.g0(x)), sci(chars.zeta(x)), sci(chars.g0_prime(x)), sci(chars.zeta_prime(x))])?;
    }
    w.flush()?;
    Ok(())
}

/// Load a table written by [`export_csv`]; values between rows use cubic Hermite interpolation.
pub fn import_csv<R: Read>(input: R, anchor: f64, left: f64, right: f64, left_closed: bool) -> Result<Characteristics> {
    let mut rd = csv::Reader::from_reader(input);
    let mut x = Vec::new();
    let mut g = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(Error::Table(format!("expected 5 columns, found {}", rec.len())));
        }
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Table(format!("bad number `{s}`"))))
            .collect::<Result<_>>()?;
        if let Some(&prev) = x.last() {
            if v[0] <= prev {
                return Err(Error::Table("abscissae must be strictly increasing".into()));
            }
        }
        x.push(v[0]);
        g.push([v[1], v[2], v[3], v[4]]);
    }
    if x.len() < 2 {
        return Err(Error::Table("need at least two rows".into()));
    }
    let nodes = Arc::new(x.clone());
    Ok(Characteristics {
        fns: Arc::new(ImportedTable { x, g }),
        mode: EvalMode::Table,
        anchor,
        left,
        right,
        left_closed,
        nodes: Some(nodes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{HoldingCost, OrderShape};

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |x: f64| x * x * x - x;
        let df = |x: f64| 3.0 * x * x - 1.0;
        let v = hermite(0.5, 2.0, f(0.5), f(2.0), df(0.5), df(2.0), 1.3);
        assert!((v - f(1.3)).abs() < 1e-14);
        let s = hermite_slope(0.5, 2.0, f(0.5), f(2.0), df(0.5), df(2.0), 1.3);
        assert!((s - df(1.3)).abs() < 1e-13);
    }

    #[test]
    fn tabulated_dbm_above_zero() {
        // For drift -1, variance 2 and c0 = x above 0:
        // g0(x) = x^2/2 + x, zeta(x) = x on [0, inf).
        let m = DiffusionModel::new(Arc::new(|_| -1.0), Arc::new(|_| 2f64.sqrt()), f64::NEG_INFINITY, f64::INFINITY, 0.0)
            .unwrap();
        let c = CostModel::new(HoldingCost::PiecewiseLinear { c_b: 1.0, c_h: 1.0 }, 1.0, OrderShape::Linear { k2: 0.0 })
            .unwrap();
        let grid = GridSpec { lo: Some(-5.0), hi: Some(5.0), ..GridSpec::default() };
        let (ch, info) = build_characteristics(&m, &c, &grid).unwrap();
        assert!(info.converged, "{info:?}");
        for &x in &[0.5, 1.0, 2.5, 4.9] {
            assert!((ch.g0(x) - (0.5 * x * x + x)).abs() < 1e-9 * (1.0 + x * x), "{x}");
            assert!((ch.zeta(x) - x).abs() < 1e-10 * (1.0 + x));
            assert!((ch.g0_prime(x) - (x + 1.0)).abs() < 1e-10 * (1.0 + x));
        }
        assert!((ch.g0(1.0) - 1.5).abs() < 1e-10);
        assert!((ch.zeta(3.0) - 3.0).abs() < 1e-10);
        // beyond the table the exact path is used
        assert!((ch.g0(7.0) - 31.5).abs() < 1e-8);
    }

    #[test]
    fn csv_round_trip() {
        let m = DiffusionModel::new(Arc::new(|x| -0.5 * x), Arc::new(|x| x), 0.0, f64::INFINITY, 1.0).unwrap();
        let c = CostModel::new(
            HoldingCost::PowerLaw { k3: 1.0, k4: 1.0, beta: -1.0 },
            1.0,
            OrderShape::Linear { k2: 1.0 },
        )
        .unwrap();
        let grid = GridSpec { lo: Some(0.1), hi: Some(10.0), tol: 1e-8, ..GridSpec::default() };
        let (ch, _) = build_characteristics(&m, &c, &grid).unwrap();
        let xs: Vec<f64> = ch.nodes().unwrap().to_vec();
        let mut buf = Vec::new();
        export_csv(&ch, &xs, &mut buf).unwrap();
        let back = import_csv(buf.as_slice(), 1.0, 0.0, f64::INFINITY, false).unwrap();
        for &x in &xs {
            assert_eq!(back.g0(x), ch.g0(x));
            assert_eq!(back.zeta_prime(x), ch.zeta_prime(x));
        }
        let mid = 0.5 * (xs[3] + xs[4]);
        assert!((back.g0(mid) - ch.g0(mid)).abs() < 1e-8 * ch.g0(mid).abs().max(1.0));
    }
}

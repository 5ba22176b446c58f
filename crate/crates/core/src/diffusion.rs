//! One-dimensional diffusions: scale and speed, boundary behaviour, generator.
//!
//! Everything is anchored at an interior point `C` where the scale density
//! equals one. The log-scale `phi(x) = integral of 2 mu / sigma^2 from C to x`
//! gives `s = exp(-phi)` and `m = exp(phi) / sigma^2`. Boundary integrals are
//! evaluated in stable form, carrying `s(p) M[C, p]`-type products from panel
//! to panel rather than the raw (possibly overflowing) factors.

use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::quad::{integrate_vec, sum_panels_to_boundary, QuadOptions, TailOptions};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// A coefficient or cost function of the state.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A time-homogeneous diffusion `dX = mu(X) dt + sigma(X) dW` on `(left, right)`.
#[derive(Clone)]
pub struct DiffusionModel {
    drift: ScalarFn,
    vol: ScalarFn,
    left: f64,
    right: f64,
    anchor: f64,
    left_reflecting: bool,
    length_scale: f64,
    label: String,
    quad: QuadOptions,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("label", &self.label)
            .field("left", &self.left)
            .field("right", &self.right)
            .field("anchor", &self.anchor)
            .field("left_reflecting", &self.left_reflecting)
            .finish()
    }
}

/// Which end of the state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// The scale density `s` or the speed density `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Density {
    Scale,
    Speed,
}

impl DiffusionModel {
    /// Build a model; `anchor` must be interior and `sigma(anchor) > 0`.
    pub fn new(drift: ScalarFn, vol: ScalarFn, left: f64, right: f64, anchor: f64) -> Result<Self> {
        if left.is_nan() || right.is_nan() || left >= right {
            return Err(Error::Model(format!("empty state space ({left}, {right})")));
        }
        if !(anchor > left && anchor < right && anchor.is_finite()) {
            return Err(Error::Model(format!("anchor {anchor} is not interior to ({left}, {right})")));
        }
        let sv = vol(anchor);
        if !(sv.is_finite() && sv != 0.0) {
            return Err(Error::Model(format!("volatility vanishes or is undefined at anchor {anchor}")));
        }
        if !drift(anchor).is_finite() {
            return Err(Error::Model(format!("drift undefined at anchor {anchor}")));
        }
        Ok(Self {
            drift,
            vol,
            left,
            right,
            anchor,
            left_reflecting: false,
            length_scale: 1.0,
            label: "diffusion".into(),
            quad: QuadOptions::default(),
        })
    }

    /// Make the (finite) left boundary instantaneously reflecting.
    pub fn with_reflecting_left(mut self) -> Result<Self> {
        if !self.left.is_finite() {
            return Err(Error::Model("only a finite left boundary can reflect".into()));
        }
        self.left_reflecting = true;
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Typical length used for the first panel of tail integrals.
    pub fn with_length_scale(mut self, scale: f64) -> Self {
        if scale.is_finite() && scale > 0.0 {
            self.length_scale = scale;
        }
        self
    }

    pub fn with_anchor(mut self, anchor: f64) -> Result<Self> {
        let m = Self::new(self.drift.clone(), self.vol.clone(), self.left, self.right, anchor)?;
        self.anchor = m.anchor;
        Ok(self)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn left(&self) -> f64 {
        self.left
    }
    pub fn right(&self) -> f64 {
        self.right
    }
    pub fn anchor(&self) -> f64 {
        self.anchor
    }
    pub fn left_reflecting(&self) -> bool {
        self.left_reflecting
    }
    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }
    pub fn drift(&self, x: f64) -> f64 {
        (self.drift)(x)
    }
    pub fn vol(&self, x: f64) -> f64 {
        (self.vol)(x)
    }
    pub fn variance(&self, x: f64) -> f64 {
        let s = (self.vol)(x);
        s * s
    }
    pub fn drift_fn(&self) -> ScalarFn {
        self.drift.clone()
    }
    pub fn vol_fn(&self) -> ScalarFn {
        self.vol.clone()
    }

    /// True for points strictly inside the state space.
    pub fn contains(&self, x: f64) -> bool {
        x > self.left && x < self.right
    }

    fn check_interior(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain { x, left: self.left, right: self.right })
        }
    }

    fn phi_rate(&self, x: f64) -> f64 {
        2.0 * self.drift(x) / self.variance(x)
    }

    /// `phi(x) - phi(from)`, integrated directly between the two points.
    pub fn log_scale_between(&self, from: f64, x: f64) -> f64 {
        integrate_vec(|v| [self.phi_rate(v)], from, x, self.quad).value[0]
    }

    /// Log-scale `phi(x)`, zero at the anchor.
    pub fn log_scale(&self, x: f64) -> Result<f64> {
        self.check_interior(x)?;
        Ok(self.log_scale_between(self.anchor, x))
    }

    /// Scale density `s(x) = exp(-phi(x))`.
    pub fn scale_density(&self, x: f64) -> Result<f64> {
        Ok((-self.log_scale(x)?).exp())
    }

    /// Speed density `m(x) = 1 / (sigma^2 s)`.
    pub fn speed_density(&self, x: f64) -> Result<f64> {
        Ok(self.log_scale(x)?.exp() / self.variance(x))
    }

    fn density_at(&self, d: Density, x: f64, phi: f64) -> f64 {
        match d {
            Density::Scale => (-phi).exp(),
            Density::Speed => phi.exp() / self.variance(x),
        }
    }

    fn tail_options(&self, start: f64) -> TailOptions {
        let first_panel = self.length_scale.max(0.5 * (start - self.anchor).abs());
        TailOptions { first_panel, quad: self.quad, ..TailOptions::default() }
    }

    pub fn boundary(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
        }
    }

    /// Integral of a density over `[lo, hi]`, each end interior or a boundary.
    fn measure(&self, d: Density, lo: f64, hi: f64) -> Result<ExtReal> {
        if lo.is_nan() || hi.is_nan() || lo > hi || lo < self.left || hi > self.right {
            return Err(Error::Domain { x: if lo < self.left { lo } else { hi }, left: self.left, right: self.right });
        }
        if lo == hi {
            return Ok(ExtReal::Finite(0.0));
        }
        let lo_in = lo > self.left;
        let hi_in = hi < self.right;
        Ok(match (lo_in, hi_in) {
            (true, true) => {
                let phi_lo = self.log_scale_between(self.anchor, lo);
                let q = self.quad;
                let v = integrate_vec(
                    |u| {
                        let phi = phi_lo + self.log_scale_between(lo, u);
                        [self.density_at(d, u, phi)]
                    },
                    lo,
                    hi,
                    q,
                )
                .value[0];
                ExtReal::from(v)
            }
            (false, true) => self.single_tail(d, hi, Side::Left),
            (true, false) => self.single_tail(d, lo, Side::Right),
            (false, false) => {
                self.single_tail(d, self.anchor, Side::Left) + self.single_tail(d, self.anchor, Side::Right)
            }
        })
    }

    /// Scale measure `S[lo, hi]`; either end may be a boundary.
    pub fn scale_measure(&self, lo: f64, hi: f64) -> Result<ExtReal> {
        self.measure(Density::Scale, lo, hi)
    }

    /// Speed measure `M[lo, hi]`; either end may be a boundary.
    pub fn speed_measure(&self, lo: f64, hi: f64) -> Result<ExtReal> {
        self.measure(Density::Speed, lo, hi)
    }

    /// Integral of `w(u) * density(u)` from interior `start` out to a boundary.
    fn weighted_tail<W: Fn(f64) -> f64>(&self, d: Density, start: f64, side: Side, w: W) -> ExtReal {
        let mut phi_near = self.log_scale_between(self.anchor, start);
        let q = self.quad;
        sum_panels_to_boundary(
            |p0, p1| {
                let (lo, hi) = if p0 < p1 { (p0, p1) } else { (p1, p0) };
                let base = phi_near;
                let v = integrate_vec(
                    |u| {
                        let phi = base + self.log_scale_between(p0, u);
                        [w(u) * self.density_at(d, u, phi)]
                    },
                    lo,
                    hi,
                    q,
                )
                .value[0];
                phi_near = base + self.log_scale_between(p0, p1);
                v
            },
            start,
            self.boundary(side),
            self.tail_options(start),
        )
    }

    fn single_tail(&self, d: Density, start: f64, side: Side) -> ExtReal {
        self.weighted_tail(d, start, side, |_| 1.0)
    }

    /// Integral of `f` against the speed measure from interior `start` to a boundary.
    pub fn speed_integral_to_boundary<W: Fn(f64) -> f64>(&self, f: W, start: f64, side: Side) -> Result<ExtReal> {
        self.check_interior(start)?;
        Ok(self.weighted_tail(Density::Speed, start, side, f))
    }

    /// Integral of `f` against the scale measure from interior `start` to a boundary.
    pub fn scale_integral_to_boundary<W: Fn(f64) -> f64>(&self, f: W, start: f64, side: Side) -> Result<ExtReal> {
        self.check_interior(start)?;
        Ok(self.weighted_tail(Density::Scale, start, side, f))
    }

    /// `s(u) * int w dM` over `[u, b)` (or `m(u) * int w dS` toward the left),
    /// i.e. a tail integral scaled by the density ratio at its start point.
    ///
    /// `relative_speed_tail(w, u, Right)` is `s(u) * int_u^b w(v) m(v) dv`, which
    /// stays moderate even where `s(u)` and the tail separately do not.
    pub fn relative_speed_tail<W: Fn(f64) -> f64>(&self, w: W, u: f64, side: Side) -> ExtReal {
        let q = self.quad;
        let mut phi_near = 0.0;
        sum_panels_to_boundary(
            |p0, p1| {
                let (lo, hi) = if p0 < p1 { (p0, p1) } else { (p1, p0) };
                let base = phi_near;
                let v = integrate_vec(
                    |v| {
                        let phi = base + self.log_scale_between(p0, v);
                        [w(v) * phi.exp() / self.variance(v)]
                    },
                    lo,
                    hi,
                    q,
                )
                .value[0];
                phi_near = base + self.log_scale_between(p0, p1);
                v
            },
            u,
            self.boundary(side),
            self.tail_options(u),
        )
    }

    /// Integral of `f` from `start` out to a boundary, using the model's tail settings.
    pub fn integrate_out<F: FnMut(f64) -> f64>(&self, f: F, start: f64, side: Side) -> ExtReal {
        crate::quad::integrate_to_boundary(f, start, self.boundary(side), self.tail_options(start))
    }

    pub fn quad_options(&self) -> QuadOptions {
        self.quad
    }

    /// `int outer(u) * Inner[C, u] du` from the anchor out to a boundary.
    ///
    /// With `outer = s, inner = m` this is the Feller integral that decides
    /// attainability; with `outer = m, inner = s` the one that decides
    /// whether the boundary is an entrance.
    fn feller_integral(&self, outer: Density, side: Side) -> ExtReal {
        // Q(p) = integral between C and p of e^{eps (phi(v) - phi(p))} w_in(v) dv
        // where the inner density is e^{eps phi} w_in.
        let eps = match outer {
            Density::Scale => 1.0,
            Density::Speed => -1.0,
        };
        let w_in = |v: f64| match outer {
            Density::Scale => 1.0 / self.variance(v),
            Density::Speed => 1.0,
        };
        let w_out = |u: f64| match outer {
            Density::Scale => 1.0,
            Density::Speed => 1.0 / self.variance(u),
        };
        let q = self.quad;
        let mut phi_near = 0.0;
        let mut cum = 0.0;
        sum_panels_to_boundary(
            |p0, p1| {
                let base = phi_near;
                let carried = cum;
                let inner_at = |u: f64, phi_u: f64| -> f64 {
                    let local = integrate_vec(
                        |v| {
                            let phi_v = base + self.log_scale_between(p0, v);
                            [(eps * (phi_v - phi_u)).exp() * w_in(v)]
                        },
                        p0.min(u),
                        p0.max(u),
                        q,
                    )
                    .value[0];
                    (eps * (base - phi_u)).exp() * carried + local
                };
                let (lo, hi) = if p0 < p1 { (p0, p1) } else { (p1, p0) };
                let v = integrate_vec(
                    |u| {
                        let phi_u = base + self.log_scale_between(p0, u);
                        [w_out(u) * inner_at(u, phi_u)]
                    },
                    lo,
                    hi,
                    q,
                )
                .value[0];
                let phi_far = base + self.log_scale_between(p0, p1);
                cum = inner_at(p1, phi_far);
                phi_near = phi_far;
                v
            },
            self.anchor,
            self.boundary(side),
            self.tail_options(self.anchor),
        )
    }

    /// Apply the generator `A f = sigma^2 / 2 f'' + mu f'` at `x`.
    pub fn generator_apply(&self, f: Smooth<'_>, x: f64) -> Result<f64> {
        self.generator_apply_with_step(f, x, default_step(x))
    }

    pub fn generator_apply_with_step(&self, f: Smooth<'_>, x: f64, h: f64) -> Result<f64> {
        self.check_interior(x)?;
        let (d1, d2) = match f {
            Smooth::Exact { df, d2f } => (df(x), d2f(x)),
            _ => {
                if !(self.contains(x - h) && self.contains(x + h)) {
                    return Err(Error::StepUnderflow { x });
                }
                match f {
                    Smooth::Values(g) => {
                        let (fm, f0, fp) = (g(x - h), g(x), g(x + h));
                        ((fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h))
                    }
                    Smooth::FirstDerivative(df) => (df(x), (df(x + h) - df(x - h)) / (2.0 * h)),
                    Smooth::Exact { .. } => unreachable!(),
                }
            }
        };
        Ok(0.5 * self.variance(x) * d2 + self.drift(x) * d1)
    }

    /// Classify both boundaries.
    pub fn classify_boundaries(&self) -> Result<BoundaryReport> {
        let left = self.classify_side(Side::Left)?;
        let right = self.classify_side(Side::Right)?;
        Ok(BoundaryReport { left, right })
    }

    fn classify_side(&self, side: Side) -> Result<BoundaryInfo> {
        let point = self.boundary(side);
        let scale_mass = self.single_tail(Density::Scale, self.anchor, side);
        let speed_mass = self.single_tail(Density::Speed, self.anchor, side);
        let attainability = self.feller_integral(Density::Scale, side);
        let entrance = self.feller_integral(Density::Speed, side);
        let name = match side {
            Side::Left => "left",
            Side::Right => "right",
        };
        let need = |v: ExtReal, what: &str| {
            v.finiteness().ok_or_else(|| Error::Indeterminate {
                what: format!("{what} at the {name} boundary {point}"),
                detail: "tail increments neither decay nor diverge within the panel budget".into(),
            })
        };
        let attracting = need(scale_mass, "scale mass")?;
        let sigma_finite = need(attainability, "attainability integral")?;
        let n_finite = need(entrance, "entrance integral")?;
        let class = match (sigma_finite, n_finite) {
            (true, true) => BoundaryClass::Regular,
            (true, false) => BoundaryClass::Exit,
            (false, true) => BoundaryClass::Entrance,
            (false, false) => BoundaryClass::Natural,
        };
        Ok(BoundaryInfo {
            point,
            attracting,
            attainable: sigma_finite,
            class,
            reflecting: side == Side::Left && self.left_reflecting,
            scale_mass,
            speed_mass,
            attainability_integral: attainability,
            entrance_integral: entrance,
        })
    }
}

/// Default central-difference step.
pub fn default_step(x: f64) -> f64 {
    1e-5f64.max(1e-5 * x.abs())
}

/// How a function is supplied to the generator.
#[derive(Clone, Copy)]
pub enum Smooth<'a> {
    /// Values only: both derivatives by central differences.
    Values(&'a dyn Fn(f64) -> f64),
    /// Exact first derivative; second derivative by differencing it.
    FirstDerivative(&'a dyn Fn(f64) -> f64),
    /// Exact first and second derivatives.
    Exact { df: &'a dyn Fn(f64) -> f64, d2f: &'a dyn Fn(f64) -> f64 },
}

/// Feller classification of a boundary point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryClass {
    Regular,
    Exit,
    Entrance,
    Natural,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundaryInfo {
    pub point: f64,
    /// Scale mass between the anchor and the boundary is finite.
    pub attracting: bool,
    pub attainable: bool,
    pub class: BoundaryClass,
    pub reflecting: bool,
    pub scale_mass: ExtReal,
    pub speed_mass: ExtReal,
    /// `int s(u) M[u, C] du` (left) or `int s(u) M[C, u] du` (right).
    pub attainability_integral: ExtReal,
    /// `int m(v) S[v, C] dv` (left) or `int m(v) S[C, v] dv` (right).
    pub entrance_integral: ExtReal,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub left: BoundaryInfo,
    pub right: BoundaryInfo,
}

impl BoundaryReport {
    /// Left boundary attracting and right boundary not.
    pub fn admissible(&self) -> bool {
        self.left.attracting && !self.right.attracting
    }

    pub fn require_admissible(&self) -> Result<()> {
        if self.right.attracting {
            return Err(Error::Inadmissible(format!(
                "right boundary {} is attracting; the process can escape upward",
                self.right.point
            )));
        }
        if !self.left.attracting {
            return Err(Error::Inadmissible(format!(
                "left boundary {} is not attracting; demand never depletes inventory",
                self.left.point
            )));
        }
        if self.right.class == BoundaryClass::Entrance {
            return Err(Error::Inadmissible("entrance right boundary is not supported".into()));
        }
        Ok(())
    }

    /// The left boundary belongs to the state space.
    pub fn left_in_state_space(&self) -> bool {
        self.left.attainable
    }
}

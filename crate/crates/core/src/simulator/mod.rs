//! Monte Carlo simulation of controlled inventory paths.
//!
//! Each path draws from its own ChaCha stream keyed by `(seed, path index)`,
//! so results do not depend on how paths are spread over threads. Between
//! grid times the path is treated as a Brownian bridge: the sampled bridge
//! extreme decides whether an order level or the reflecting boundary was
//! touched inside the step, and gives the exact reflection amount for
//! constant coefficients.

mod improve;

pub use improve::{
    compare_single_order, gbm_order_threshold, ImproveCase, ImproveSetup, OrderComparison, OrderRecord,
};

use crate::costs::CostModel;
use crate::diffusion::DiffusionModel;
use crate::error::{Error, Result};
use crate::solver::StationaryDensity;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::sync::Arc;

/// What the controller sees when a custom policy is consulted.
#[derive(Debug, Clone, Copy)]
pub struct PathView {
    pub t: f64,
    pub x: f64,
    /// Lowest level since the last order (or the start).
    pub min_since_order: f64,
    pub orders: usize,
}

/// A policy given as a callback returning the order target, if any.
#[derive(Clone)]
pub struct CustomPolicy(pub Arc<dyn Fn(&PathView) -> Option<f64> + Send + Sync>);

impl fmt::Debug for CustomPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomPolicy")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    /// Order up to `z` whenever the level falls to `y`.
    OrderUpTo { y: f64, z: f64 },
    /// After each order, wait for a visit to `trigger`, then order up to
    /// `target` the next time the level rises to `reorder`.
    DelayedTrigger { trigger: f64, reorder: f64, target: f64 },
    /// No orders; the left boundary reflects and each unit of reflection is charged.
    JustInTime,
    #[serde(skip)]
    Custom(CustomPolicy),
}

impl PolicySpec {
    pub fn validate(&self, model: &DiffusionModel) -> Result<()> {
        let inside = |v: f64| model.contains(v) || (model.left_reflecting() && v == model.left());
        match *self {
            PolicySpec::OrderUpTo { y, z } => {
                if !(y < z && inside(y) && model.contains(z)) {
                    return Err(Error::Config(format!("order-up-to levels need y < z inside the state space, got ({y}, {z})")));
                }
            }
            PolicySpec::DelayedTrigger { trigger, reorder, target } => {
                if !(trigger < reorder && reorder < target && inside(trigger) && model.contains(target)) {
                    return Err(Error::Config(format!(
                        "delayed policy needs trigger < reorder < target inside the state space, got ({trigger}, {reorder}, {target})"
                    )));
                }
            }
            PolicySpec::JustInTime => {
                if !model.left_reflecting() {
                    return Err(Error::Config("just-in-time ordering needs a reflecting left boundary".into()));
                }
            }
            PolicySpec::Custom(_) => {}
        }
        Ok(())
    }

    fn default_start(&self, model: &DiffusionModel) -> f64 {
        match *self {
            PolicySpec::OrderUpTo { z, .. } => z,
            PolicySpec::DelayedTrigger { target, .. } => target,
            _ => model.anchor(),
        }
    }

    fn default_range(&self, model: &DiffusionModel) -> (f64, f64) {
        let l = model.length_scale();
        match *self {
            PolicySpec::OrderUpTo { y, z } => (y, z + (6.0 * (z - y)).max(20.0 * l)),
            PolicySpec::DelayedTrigger { trigger, target, .. } => (trigger, target + (6.0 * (target - trigger)).max(20.0 * l)),
            PolicySpec::JustInTime => (model.left(), model.left() + 20.0 * l),
            PolicySpec::Custom(_) => (model.anchor() - 20.0 * l, model.anchor() + 20.0 * l),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    /// Fraction of the horizon discarded before costs and occupancy are recorded.
    pub burn_in: f64,
    pub x0: Option<f64>,
    pub bins: usize,
    pub hist_lo: Option<f64>,
    pub hist_hi: Option<f64>,
    /// Paths leaving `[-blowup, blowup]` are abandoned and counted.
    pub blowup: f64,
    pub threads: Option<usize>,
    /// Number of evenly spaced states of path 0 to keep.
    pub record_points: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dt: 1e-3,
            horizon: 2000.0,
            paths: 64,
            burn_in: 0.1,
            x0: None,
            bins: 400,
            hist_lo: None,
            hist_hi: None,
            blowup: 1e12,
            threads: None,
            record_points: 0,
        }
    }
}

/// Sample mean with its standard error across paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    fn from_samples(v: &[f64]) -> Self {
        let n = v.len() as f64;
        if v.is_empty() {
            return Self { mean: f64::NAN, stderr: f64::NAN };
        }
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { f64::NAN };
        Self { mean, stderr: (var / n).sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    pub count: u64,
    pub mean_length: f64,
    pub mean_cost: f64,
    /// Total cycle cost over total cycle time.
    pub renewal_reward_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.below + self.above + self.counts.iter().sum::<u64>()
    }

    pub fn edges(&self) -> Vec<f64> {
        let n = self.counts.len();
        (0..=n).map(|i| self.lo + (self.hi - self.lo) * i as f64 / n as f64).collect()
    }

    /// Empirical distribution function at each edge.
    pub fn cdf_at_edges(&self) -> Vec<f64> {
        let total = self.total() as f64;
        let mut acc = self.below;
        let mut out = vec![acc as f64 / total];
        for &c in &self.counts {
            acc += c;
            out.push(acc as f64 / total);
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationResult {
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    pub burn_in: f64,
    pub aborted_paths: usize,
    /// Long-run average cost; its mean is the sum of the three component means.
    pub avg_cost: Estimate,
    pub holding: Estimate,
    pub ordering: Estimate,
    pub reflection: Estimate,
    pub order_frequency: Estimate,
    pub local_time_rate: Estimate,
    pub cycles: CycleStats,
    pub histogram: Histogram,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub path_sample: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
enum Space {
    Linear,
    Log,
}

struct Engine<'a> {
    model: &'a DiffusionModel,
    costs: &'a CostModel,
    policy: &'a PolicySpec,
    cfg: &'a SimConfig,
    space: Space,
    steps: usize,
    burn: usize,
    hist: (f64, f64),
}

#[derive(Debug, Default)]
struct PathOutcome {
    holding: f64,
    ordering: f64,
    local_time: f64,
    orders: u64,
    cycles: u64,
    cycle_time: f64,
    cycle_cost: f64,
    counts: Vec<u64>,
    below: u64,
    above: u64,
    aborted: bool,
    sample: Vec<(f64, f64)>,
}

/// Order and trigger levels in the working coordinate.
struct Levels {
    order: f64,
    arm: f64,
    reorder: f64,
    low: f64,
    low_armed: f64,
}

/// Bridge minimum of a step with endpoint increment `d`, variance rate `s2`.
fn bridge_min(d: f64, s2dt: f64, u: f64) -> f64 {
    0.5 * (d - (d * d - 2.0 * s2dt * u.ln()).sqrt())
}

fn bridge_max(d: f64, s2dt: f64, u: f64) -> f64 {
    0.5 * (d + (d * d - 2.0 * s2dt * u.ln()).sqrt())
}

impl Engine<'_> {
    fn to_w(&self, x: f64) -> f64 {
        match self.space {
            Space::Linear => x,
            Space::Log => x.ln(),
        }
    }

    fn to_x(&self, w: f64) -> f64 {
        match self.space {
            Space::Linear => w,
            Space::Log => w.exp(),
        }
    }

    fn coefficients(&self, x: f64) -> (f64, f64) {
        let (mu, sig) = (self.model.drift(x), self.model.vol(x));
        match self.space {
            Space::Linear => (mu, sig),
            Space::Log => {
                let s = sig / x;
                (mu / x - 0.5 * s * s, s)
            }
        }
    }

    fn run_path(&self, index: usize) -> PathOutcome {
        let cfg = self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index as u64);
        let dt = cfg.dt;
        let sqdt = dt.sqrt();
        let reflecting = self.model.left_reflecting();
        let a = self.model.left();
        let k5 = self.costs.reflection_cost().unwrap_or(0.0);
        let bins = cfg.bins.max(1);
        let (hlo, hhi) = self.hist;
        let bin_w = (hhi - hlo) / bins as f64;
        let record_every = if index == 0 && cfg.record_points > 0 { (self.steps / cfg.record_points).max(1) } else { 0 };

        let mut out = PathOutcome { counts: vec![0; bins], ..Default::default() };
        let mut x = cfg.x0.unwrap_or_else(|| self.policy.default_start(self.model));
        let mut armed = false;
        let mut orders = 0usize;
        let mut min_since = x;
        let mut cycle_open: Option<(f64, f64)> = None; // (start time, cost so far)

        if let PolicySpec::OrderUpTo { y, z } = *self.policy {
            if x <= y {
                x = z;
                orders += 1;
                min_since = z;
            }
        }

        let levels = self.levels();
        let mut w = self.to_w(x);
        for i in 0..self.steps {
            let t = i as f64 * dt;
            let recording = i >= self.burn;
            if let PolicySpec::Custom(ref cb) = self.policy {
                let view = PathView { t, x, min_since_order: min_since, orders };
                if let Some(target) = (cb.0)(&view) {
                    let c = self.costs.c1(x, target);
                    if recording {
                        out.ordering += c;
                        out.orders += 1;
                        self.close_cycle(&mut out, &mut cycle_open, t, c);
                    }
                    x = target;
                    w = self.to_w(x);
                    orders += 1;
                    min_since = x;
                }
            }
            let hold = self.costs.c0(x) * dt;
            if recording {
                out.holding += hold;
                if let Some((_, ref mut cost)) = cycle_open {
                    *cost += hold;
                }
                let pos = (x - hlo) / bin_w;
                if pos < 0.0 {
                    out.below += 1;
                } else if pos >= bins as f64 {
                    out.above += 1;
                } else {
                    out.counts[pos as usize] += 1;
                }
            }
            if record_every > 0 && i % record_every == 0 {
                out.sample.push((t, x));
            }

            let (m, s) = self.coefficients(x);
            let z: f64 = rng.sample(StandardNormal);
            let d = m * dt + s * sqdt * z;
            let mut w1 = w + d;
            let s2dt = s * s * dt;

            // lowest level that matters inside this step
            let lowest = if armed { levels.low_armed } else { levels.low };
            let mut path_min = f64::INFINITY;
            if lowest > f64::NEG_INFINITY {
                let (d0, d1) = (w - lowest, w1 - lowest);
                let p = if d1 <= 0.0 { 1.0 } else { (-2.0 * d0 * d1 / s2dt).exp() };
                if p > 1e-16 {
                    let u: f64 = 1.0 - rng.gen::<f64>();
                    path_min = w + bridge_min(d, s2dt, u);
                }
            }

            let mut ordered_to = None;
            let mut order_cost = 0.0;
            if let PolicySpec::OrderUpTo { y, z: target } = *self.policy {
                if path_min <= levels.order {
                    ordered_to = Some(target);
                    order_cost = self.costs.c1(y, target);
                }
            }
            if ordered_to.is_none() {
                if !armed && path_min <= levels.arm {
                    armed = true;
                }
                if reflecting && path_min < a {
                    let dl = a - path_min;
                    w1 += dl;
                    if recording {
                        out.local_time += dl;
                        if let Some((_, ref mut cost)) = cycle_open {
                            *cost += k5 * dl;
                        }
                    }
                }
            }
            if ordered_to.is_none() && armed {
                if let PolicySpec::DelayedTrigger { reorder, target, .. } = *self.policy {
                    let lvl = levels.reorder;
                    let (d0, d1) = (lvl - w, lvl - w1);
                    let hit = if d1 <= 0.0 {
                        true
                    } else {
                        let p = (-2.0 * d0.max(0.0) * d1 / s2dt).exp();
                        p > 1e-16 && {
                            let u: f64 = 1.0 - rng.gen::<f64>();
                            w + bridge_max(d, s2dt, u) >= lvl
                        }
                    };
                    if hit {
                        ordered_to = Some(target);
                        order_cost = self.costs.c1(reorder, target);
                        armed = false;
                    }
                }
            }

            x = match ordered_to {
                Some(target) => {
                    if recording {
                        out.ordering += order_cost;
                        out.orders += 1;
                        self.close_cycle(&mut out, &mut cycle_open, t + dt, order_cost);
                    } else if i + 1 >= self.burn {
                        cycle_open = Some((t + dt, 0.0));
                    }
                    orders += 1;
                    min_since = target;
                    w = self.to_w(target);
                    target
                }
                None => {
                    w = w1;
                    self.to_x(w1)
                }
            };
            min_since = min_since.min(x);
            if !(x.is_finite() && x.abs() <= cfg.blowup) {
                out.aborted = true;
                break;
            }
        }
        out
    }

    fn levels(&self) -> Levels {
        let w_or = |v: Option<f64>| match v {
            Some(v) if v > 0.0 || matches!(self.space, Space::Linear) => self.to_w(v),
            _ => f64::NEG_INFINITY,
        };
        let refl = w_or(self.model.left_reflecting().then_some(self.model.left()));
        let (order, arm, reorder) = match *self.policy {
            PolicySpec::OrderUpTo { y, .. } => (w_or(Some(y)), f64::NEG_INFINITY, f64::INFINITY),
            PolicySpec::DelayedTrigger { trigger, reorder, .. } => (f64::NEG_INFINITY, w_or(Some(trigger)), self.to_w(reorder)),
            _ => (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::INFINITY),
        };
        Levels { order, arm, reorder, low: order.max(arm).max(refl), low_armed: order.max(refl) }
    }

    fn close_cycle(&self, out: &mut PathOutcome, open: &mut Option<(f64, f64)>, t: f64, order_cost: f64) {
        if let Some((start, cost)) = open.take() {
            out.cycles += 1;
            out.cycle_time += t - start;
            out.cycle_cost += cost + order_cost;
        }
        *open = Some((t, 0.0));
    }
}

/// Simulate `cfg.paths` independent paths under `policy` and estimate long-run averages.
pub fn simulate(model: &DiffusionModel, costs: &CostModel, policy: &PolicySpec, cfg: &SimConfig) -> Result<SimulationResult> {
    policy.validate(model)?;
    if !(cfg.dt > 0.0 && cfg.horizon > 0.0 && cfg.paths > 0 && (0.0..1.0).contains(&cfg.burn_in)) {
        return Err(Error::Config("simulation needs dt > 0, horizon > 0, paths > 0 and burn_in in [0, 1)".into()));
    }
    if let Some(x0) = cfg.x0 {
        if !(model.contains(x0) || (model.left_reflecting() && x0 == model.left())) {
            return Err(Error::Domain { x: x0, left: model.left(), right: model.right() });
        }
    }
    let space = if model.left() == 0.0 && model.right() == f64::INFINITY && !model.left_reflecting() { Space::Log } else { Space::Linear };
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let burn = (cfg.burn_in * steps as f64).floor() as usize;
    let (dlo, dhi) = policy.default_range(model);
    let hist = (cfg.hist_lo.unwrap_or(dlo), cfg.hist_hi.unwrap_or(dhi));
    if !(hist.0 < hist.1) {
        return Err(Error::Config(format!("histogram range [{}, {}] is empty", hist.0, hist.1)));
    }
    let engine = Engine { model, costs, policy, cfg, space, steps, burn, hist };
    let run = || (0..cfg.paths).into_par_iter().map(|i| engine.run_path(i)).collect::<Vec<_>>();
    let outcomes = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let window = (steps - burn) as f64 * cfg.dt;
    let k5 = costs.reflection_cost().unwrap_or(0.0);
    let kept: Vec<&PathOutcome> = outcomes.iter().filter(|o| !o.aborted).collect();
    let per = |f: &dyn Fn(&PathOutcome) -> f64| Estimate::from_samples(&kept.iter().map(|o| f(o) / window).collect::<Vec<_>>());
    let holding = per(&|o| o.holding);
    let ordering = per(&|o| o.ordering);
    let reflection = per(&|o| k5 * o.local_time);
    let total = per(&|o| o.holding + o.ordering + k5 * o.local_time);
    let avg_cost = Estimate { mean: holding.mean + ordering.mean + reflection.mean, stderr: total.stderr };

    let mut counts = vec![0u64; cfg.bins.max(1)];
    let (mut below, mut above) = (0, 0);
    let (mut cycles, mut ctime, mut ccost) = (0u64, 0.0, 0.0);
    for o in &kept {
        for (c, v) in counts.iter_mut().zip(&o.counts) {
            *c += v;
        }
        below += o.below;
        above += o.above;
        cycles += o.cycles;
        ctime += o.cycle_time;
        ccost += o.cycle_cost;
    }
    let n = cycles as f64;
    Ok(SimulationResult {
        seed: cfg.seed,
        dt: cfg.dt,
        horizon: cfg.horizon,
        paths: cfg.paths,
        burn_in: cfg.burn_in,
        aborted_paths: outcomes.len() - kept.len(),
        avg_cost,
        holding,
        ordering,
        reflection,
        order_frequency: per(&|o| o.orders as f64),
        local_time_rate: per(&|o| o.local_time),
        cycles: CycleStats { count: cycles, mean_length: ctime / n, mean_cost: ccost / n, renewal_reward_cost: ccost / ctime },
        histogram: Histogram { lo: hist.0, hi: hist.1, counts, below, above },
        path_sample: outcomes.first().map(|o| o.sample.clone()).unwrap_or_default(),
    })
}

/// Sup distance between the empirical occupancy distribution and `cdf`
/// evaluated at the histogram edges.
pub fn stationary_distance(result: &SimulationResult, cdf: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
    let edges = result.histogram.edges();
    let exact = cdf(&edges);
    result.histogram.cdf_at_edges().iter().zip(&exact).map(|(e, c)| (e - c).abs()).fold(0.0, f64::max)
}

/// [`stationary_distance`] against the stationary law of an (s, S) policy.
pub fn stationary_check(result: &SimulationResult, density: &StationaryDensity) -> f64 {
    stationary_distance(result, |xs| density.cdf_many(xs))
}

/// Distribution function of a density on `[lo, ..)` at increasing points, by quadrature.
pub fn cdf_from_density(pdf: impl Fn(f64) -> f64, lo: f64, xs: &[f64]) -> Vec<f64> {
    let q = crate::quad::QuadOptions::default();
    let mut acc = 0.0;
    let mut prev = lo;
    xs.iter()
        .map(|&x| {
            if x > prev {
                acc += crate::quad::integrate(&pdf, prev, x, q);
                prev = x;
            }
            acc
        })
        .collect()
}

/// Histogram as CSV: `lo,hi,count,density,empirical_cdf`.
pub fn write_histogram_csv<W: Write>(result: &SimulationResult, out: W) -> Result<()> {
    let h = &result.histogram;
    let total = h.total() as f64;
    let edges = h.edges();
    let cdf = h.cdf_at_edges();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lo", "hi", "count", "density", "empirical_cdf"])?;
    for (i, &c) in h.counts.iter().enumerate() {
        let width = edges[i + 1] - edges[i];
        w.write_record([
            crate::characteristics::sci(edges[i]),
            crate::characteristics::sci(edges[i + 1]),
            c.to_string(),
            crate::characteristics::sci(c as f64 / total / width),
            crate::characteristics::sci(cdf[i + 1]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Recorded states of path 0 as CSV: `t,x`.
pub fn write_path_csv<W: Write>(result: &SimulationResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x"])?;
    for &(t, x) in &result.path_sample {
        w.write_record([crate::characteristics::sci(t), crate::characteristics::sci(x)])?;
    }
    w.flush()?;
    Ok(())
}

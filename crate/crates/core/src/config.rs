//! Run configuration, read from TOML. Unknown keys are rejected.

use crate::characteristics::{build_characteristics, Characteristics, EvalMode, GridSpec, TableInfo};
use crate::costs::{CostModel, HoldingCost, OrderShape};
use crate::diffusion::{BoundaryReport, DiffusionModel};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::models::{Builtin, DbmParams, GbmParams};
use crate::qvi::QviGrid;
use crate::simulator::{PolicySpec, SimConfig};
use crate::solver::SolveOptions;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// Required for expression models, rejected for builtins.
    #[serde(default)]
    pub costs: Option<CostsConfig>,
    #[serde(default)]
    pub characteristics: CharacteristicsConfig,
    #[serde(default)]
    pub solve: SolveOptions,
    #[serde(default)]
    pub verify: QviGrid,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Continue when a standing cost requirement fails.
    #[serde(default)]
    pub skip_cost_validation: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ModelConfig {
    Dbm(DbmParams),
    ReflectedDbm(DbmParams),
    Gbm(GbmParams),
    Expression(ExpressionModel),
}

/// A diffusion given by coefficient formulas in `x`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpressionModel {
    pub drift: String,
    pub vol: String,
    #[serde(default = "neg_inf")]
    pub left: f64,
    #[serde(default = "pos_inf")]
    pub right: f64,
    pub anchor: f64,
    #[serde(default)]
    pub reflecting_left: bool,
    #[serde(default = "one")]
    pub length_scale: f64,
    /// Named constants usable in every formula.
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}
fn pos_inf() -> f64 {
    f64::INFINITY
}
fn one() -> f64 {
    1.0
}

/// Costs for expression models: `c0(x)`, `c1(y, z) = fixed + H(z) - H(y)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsConfig {
    pub holding: String,
    pub fixed: f64,
    #[serde(default = "zero_expr")]
    pub order: String,
    #[serde(default)]
    pub reflection: Option<f64>,
}

fn zero_expr() -> String {
    "0".into()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CharacteristicsConfig {
    /// Ignored for expression models, which are always tabulated.
    pub mode: EvalMode,
    pub grid: GridSpec,
}

impl Default for CharacteristicsConfig {
    fn default() -> Self {
        Self { mode: EvalMode::ClosedForm, grid: GridSpec::default() }
    }
}

/// Simulation settings plus the policy to simulate (the solved optimum when absent).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub policy: Option<PolicySpec>,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    pub burn_in: f64,
    pub x0: Option<f64>,
    pub bins: usize,
    pub hist_lo: Option<f64>,
    pub hist_hi: Option<f64>,
    pub blowup: f64,
    pub record_points: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            policy: None,
            seed: d.seed,
            dt: d.dt,
            horizon: d.horizon,
            paths: d.paths,
            burn_in: d.burn_in,
            x0: d.x0,
            bins: d.bins,
            hist_lo: d.hist_lo,
            hist_hi: d.hist_hi,
            blowup: d.blowup,
            record_points: d.record_points,
        }
    }
}

impl SimulateConfig {
    pub fn sim_config(&self, threads: Option<usize>) -> SimConfig {
        SimConfig {
            seed: self.seed,
            dt: self.dt,
            horizon: self.horizon,
            paths: self.paths,
            burn_in: self.burn_in,
            x0: self.x0,
            bins: self.bins,
            hist_lo: self.hist_lo,
            hist_hi: self.hist_hi,
            blowup: self.blowup,
            threads,
            record_points: self.record_points,
        }
    }
}

/// Policy comparison on the reflected model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    /// Points per axis of the delayed-policy `(y, z)` grid.
    pub grid: usize,
    /// Largest `z` on the grid, as a multiple of the optimal `z`.
    pub z_factor: f64,
    pub simulate: bool,
    pub horizon: f64,
    pub paths: usize,
    pub dt: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self { grid: 3, z_factor: 2.0, simulate: true, horizon: 200.0, paths: 16, dt: 1e-3 }
    }
}

/// Everything needed to run a command, assembled from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Setup {
    pub model: DiffusionModel,
    pub costs: CostModel,
    pub chars: Characteristics,
    pub builtin: Option<Builtin>,
    pub boundaries: BoundaryReport,
    pub table: Option<TableInfo>,
}

impl RunConfig {
    pub fn from_toml(src: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.model, &self.costs) {
            (ModelConfig::Expression(_), None) => Err(Error::Config("expression models need a [costs] section".into())),
            (ModelConfig::Expression(_), Some(_)) => Ok(()),
            (_, Some(_)) => Err(Error::Config("builtin models take their costs from the model parameters; remove [costs]".into())),
            (_, None) => Ok(()),
        }?;
        let s = &self.simulate;
        if !(s.dt > 0.0 && s.horizon > 0.0 && s.paths > 0 && (0.0..1.0).contains(&s.burn_in)) {
            return Err(Error::Config("simulate needs dt > 0, horizon > 0, paths > 0, 0 <= burn_in < 1".into()));
        }
        if self.solve.starts == 0 {
            return Err(Error::Config("solve.starts must be positive".into()));
        }
        Ok(())
    }

    pub fn builtin(&self) -> Option<Builtin> {
        match self.model {
            ModelConfig::Dbm(p) => Some(Builtin::Dbm(p)),
            ModelConfig::ReflectedDbm(p) => Some(Builtin::ReflectedDbm(p)),
            ModelConfig::Gbm(p) => Some(Builtin::Gbm(p)),
            ModelConfig::Expression(_) => None,
        }
    }

    /// Build the model and costs, classify the boundaries, and prepare the characteristics.
    pub fn setup(&self) -> Result<Setup> {
        let (model, costs) = match (&self.model, &self.costs) {
            (ModelConfig::Expression(m), Some(c)) => expression_setup(m, c)?,
            _ => {
                let b = self.builtin().expect("non-expression model");
                (b.diffusion()?, b.costs()?)
            }
        };
        let boundaries = model.classify_boundaries()?;
        boundaries.require_admissible()?;
        let builtin = self.builtin();
        let (chars, table) = match builtin {
            Some(b) if self.characteristics.mode == EvalMode::ClosedForm => (b.closed_form()?, None),
            _ => {
                let (c, t) = build_characteristics(&model, &costs, &self.characteristics.grid)?;
                (c, Some(t))
            }
        };
        Ok(Setup { model, costs, chars, builtin, boundaries, table })
    }
}

fn expression_setup(m: &ExpressionModel, c: &CostsConfig) -> Result<(DiffusionModel, CostModel)> {
    let parse = |s: &str| Expr::parse_with(s, &m.constants);
    let drift = parse(&m.drift)?;
    let vol = parse(&m.vol)?;
    let mut model = DiffusionModel::new(
        Arc::new(move |x| drift.eval(x)),
        Arc::new(move |x| vol.eval(x)),
        m.left,
        m.right,
        m.anchor,
    )?
    .with_length_scale(m.length_scale)
    .with_label("expression");
    if m.reflecting_left {
        model = model.with_reflecting_left()?;
    }
    let mut costs = CostModel::new(HoldingCost::Expression(parse(&c.holding)?), c.fixed, OrderShape::Expression(parse(&c.order)?))?;
    if let Some(k5) = c.reflection {
        costs = costs.with_reflection_cost(k5);
    }
    Ok((model, costs))
}

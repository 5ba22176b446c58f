//! Builtin models with closed-form characteristics.

mod dbm;
mod gbm;

pub use dbm::{
    dbm_stationary_density, delayed_beats, delayed_cost, delayed_cost_dy_numerator, delayed_reflection_rate,
    delayed_stationary_density, delayed_sufficient, jit_better, jit_cost, reflected_optimum, DbmCharacteristics,
    DbmParams,
};
pub use gbm::{gbm_level_function, gbm_level_minimizer, gbm_regime, GbmCharacteristics, GbmParams, GbmRegime};

use crate::characteristics::{build_characteristics, Characteristics, EvalMode, GridSpec};
use crate::costs::CostModel;
use crate::diffusion::DiffusionModel;
use crate::error::Result;
use serde::{Deserialize, Serialize};

/// A builtin model: diffusion, costs and closed-form characteristics together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Builtin {
    Dbm(DbmParams),
    ReflectedDbm(DbmParams),
    Gbm(GbmParams),
}

impl Builtin {
    pub fn name(&self) -> &'static str {
        match self {
            Builtin::Dbm(_) => "dbm",
            Builtin::ReflectedDbm(_) => "reflected_dbm",
            Builtin::Gbm(_) => "gbm",
        }
    }

    pub fn diffusion(&self) -> Result<DiffusionModel> {
        match self {
            Builtin::Dbm(p) => p.diffusion(),
            Builtin::ReflectedDbm(p) => p.reflected_diffusion(),
            Builtin::Gbm(p) => p.diffusion(),
        }
    }

    pub fn costs(&self) -> Result<CostModel> {
        match self {
            Builtin::Dbm(p) | Builtin::ReflectedDbm(p) => p.costs(),
            Builtin::Gbm(p) => p.costs(),
        }
    }

    pub fn closed_form(&self) -> Result<Characteristics> {
        match self {
            Builtin::Dbm(p) => p.characteristics(false),
            Builtin::ReflectedDbm(p) => p.characteristics(true),
            Builtin::Gbm(p) => p.characteristics(),
        }
    }

    /// Characteristics in the requested mode.
    pub fn characteristics(&self, mode: EvalMode, grid: &GridSpec) -> Result<Characteristics> {
        match mode {
            EvalMode::ClosedForm => self.closed_form(),
            _ => Ok(build_characteristics(&self.diffusion()?, &self.costs()?, grid)?.0),
        }
    }
}

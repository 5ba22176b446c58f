//! Long-run average cost (s, S) inventory control for one-dimensional diffusions.

// `!(a < b)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod characteristics;
pub mod config;
pub mod coords;
pub mod costs;
pub mod diffusion;
pub mod error;
pub mod expr;
pub mod ext;
pub mod models;
pub mod optim;
pub mod quad;
pub mod qvi;
pub mod simulator;
pub mod solver;

pub use characteristics::{build_characteristics, CharacteristicFns, Characteristics, EvalMode, GridSpec, TableInfo};
pub use costs::{Check, CostModel, CostValidation, HoldingCost, OrderShape};
pub use diffusion::{BoundaryClass, BoundaryInfo, BoundaryReport, DiffusionModel, ScalarFn, Side, Smooth};
pub use error::{Error, Result};
pub use ext::ExtReal;
pub use models::{Builtin, DbmParams, GbmParams, GbmRegime};
pub use solver::{
    evaluate_policy, expected_cycle, minimize_f, Cycle, PolicyEvaluation, SolveOptions, SolveReport, StationaryDensity, Verdict,
};
pub use qvi::{assemble, build_g, check_lower_monotonicity, verify_qvi, GSolution, QviGrid, QviReport};
pub use simulator::{simulate, stationary_check, PolicySpec, SimConfig, SimulationResult};
pub use config::{RunConfig, Setup};

use thiserror::Error;

/// Errors raised by the analysis and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {x} lies outside the state space ({left}, {right})")]
    Domain { x: f64, left: f64, right: f64 },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid cost specification: {0}")]
    Costs(String),

    #[error("quantity `{what}` diverges")]
    Divergent { what: String },

    #[error("could not certify `{what}`: {detail}")]
    Indeterminate { what: String, detail: String },

    #[error("model is not admissible: {0}")]
    Inadmissible(String),

    #[error("finite-difference step leaves the state space at x = {x}")]
    StepUnderflow { x: f64 },

    #[error("optimiser failed to converge after {starts} starts: {detail}")]
    NonConvergence { starts: usize, detail: String },

    #[error("no minimiser: {0}")]
    NoMinimizer(String),

    #[error("smooth-fit gluing failed at the lower level: {0}")]
    Gluing(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("table error: {0}")]
    Table(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

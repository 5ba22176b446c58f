//! Extended reals for integrals that may diverge.

use serde::{Deserialize, Serialize};
use std::fmt;

/// A nonnegative-or-finite quantity that may be `+inf` or undecidable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtReal {
    Finite(f64),
    PosInf,
    Indeterminate,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtReal::PosInf)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            _ => None,
        }
    }

    /// Tri-state finiteness: `Some(true)` finite, `Some(false)` infinite.
    pub fn finiteness(self) -> Option<bool> {
        match self {
            ExtReal::Finite(_) => Some(true),
            ExtReal::PosInf => Some(false),
            ExtReal::Indeterminate => None,
        }
    }

    /// Value as `f64`, with `+inf` and `NaN` for the non-finite cases.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => f64::INFINITY,
            ExtReal::Indeterminate => f64::NAN,
        }
    }
}

impl From<f64> for ExtReal {
    fn from(v: f64) -> Self {
        if v.is_nan() {
            ExtReal::Indeterminate
        } else if v == f64::INFINITY {
            ExtReal::PosInf
        } else {
            ExtReal::Finite(v)
        }
    }
}

impl std::ops::Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        use ExtReal::*;
        match (self, rhs) {
            (Indeterminate, _) | (_, Indeterminate) => Indeterminate,
            (PosInf, _) | (_, PosInf) => PosInf,
            (Finite(a), Finite(b)) => Finite(a + b),
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => write!(f, "+inf"),
            ExtReal::Indeterminate => write!(f, "indeterminate"),
        }
    }
}

//! Monotone maps from an interval onto the real line.
//!
//! Used to place tabulation nodes (uniform in the mapped coordinate, hence
//! geometric toward finite ends) and to give the optimiser an unconstrained
//! search space.

/// Bijection between `(left, right)` and an interval of the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coordinate {
    Linear { scale: f64 },
    LogLeft { left: f64 },
    LogRight { right: f64 },
    Logit { left: f64, right: f64 },
}

impl Coordinate {
    /// Natural coordinate for an interval: logarithmic toward each finite end.
    pub fn for_interval(left: f64, right: f64, scale: f64) -> Self {
        match (left.is_finite(), right.is_finite()) {
            (false, false) => Coordinate::Linear { scale },
            (true, false) => Coordinate::LogLeft { left },
            (false, true) => Coordinate::LogRight { right },
            (true, true) => Coordinate::Logit { left, right },
        }
    }

    pub fn to_t(&self, x: f64) -> f64 {
        match *self {
            Coordinate::Linear { scale } => x / scale,
            Coordinate::LogLeft { left } => (x - left).ln(),
            Coordinate::LogRight { right } => -(right - x).ln(),
            Coordinate::Logit { left, right } => ((x - left) / (right - x)).ln(),
        }
    }

    pub fn to_x(&self, t: f64) -> f64 {
        match *self {
            Coordinate::Linear { scale } => t * scale,
            Coordinate::LogLeft { left } => left + t.exp(),
            Coordinate::LogRight { right } => right - (-t).exp(),
            Coordinate::Logit { left, right } => {
                if t > 0.0 {
                    let e = (-t).exp();
                    (left * e + right) / (1.0 + e)
                } else {
                    let e = t.exp();
                    (left + right * e) / (1.0 + e)
                }
            }
        }
    }
}

//! Per-capita rate fields (birth, intrinsic death, competition strength).

use std::fmt;
use std::sync::Arc;

/// A nonnegative rate as a function of position, with a known upper bound.
///
/// Spatially constant rates are the fast path: evaluation is a copy and
/// thinning acceptance is always 1. A `Field` carries an explicit bound
/// used as the thinning envelope.
#[derive(Clone)]
pub enum RateField {
    Constant(f64),
    Field {
        bound: f64,
        f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    },
}

impl RateField {
    pub fn constant(v: f64) -> Self {
        RateField::Constant(v)
    }

    pub fn field(bound: f64, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        RateField::Field { bound, f: Arc::new(f) }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            RateField::Constant(v) => *v,
            RateField::Field { f, .. } => f(x),
        }
    }

    /// Envelope bound (the bar constant).
    #[inline]
    pub fn bound(&self) -> f64 {
        match self {
            RateField::Constant(v) => *v,
            RateField::Field { bound, .. } => *bound,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, RateField::Constant(_))
    }
}

impl fmt::Debug for RateField {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateField::Constant(v) => write!(fm, "Constant({v})"),
            RateField::Field { bound, .. } => write!(fm, "Field {{ bound: {bound} }}"),
        }
    }
}

impl From<f64> for RateField {
    fn from(v: f64) -> Self {
        RateField::Constant(v)
    }
}

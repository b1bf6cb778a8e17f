use serde::{Deserialize, Serialize};

/// Why a quantity is infinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InfiniteReason {
    DivergentTail,
    SingularCore,
    AtomInEvaluationSet,
}

/// A nonnegative real or `+inf` with a reason.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtendedValue {
    Finite(f64),
    Infinite(InfiniteReason),
}

impl ExtendedValue {
    pub fn zero() -> Self {
        ExtendedValue::Finite(0.0)
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtendedValue::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            ExtendedValue::Finite(v) => Some(v),
            ExtendedValue::Infinite(_) => None,
        }
    }

    pub fn reason(&self) -> Option<InfiniteReason> {
        match *self {
            ExtendedValue::Finite(_) => None,
            ExtendedValue::Infinite(r) => Some(r),
        }
    }

    /// `f64::INFINITY` for infinite values.
    pub fn to_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    pub fn map(self, f: impl FnOnce(f64) -> f64) -> Self {
        match self {
            ExtendedValue::Finite(v) => ExtendedValue::Finite(f(v)),
            inf => inf,
        }
    }

    pub fn add(self, other: Self) -> Self {
        match (self, other) {
            (ExtendedValue::Finite(a), ExtendedValue::Finite(b)) => ExtendedValue::Finite(a + b),
            (ExtendedValue::Infinite(r), _) | (_, ExtendedValue::Infinite(r)) => ExtendedValue::Infinite(r),
        }
    }
}

impl std::fmt::Display for ExtendedValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExtendedValue::Finite(v) => write!(f, "{v:.16e}"),
            ExtendedValue::Infinite(r) => write!(f, "inf({r:?})"),
        }
    }
}

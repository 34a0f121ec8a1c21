//! Numeric scalar used for threshold cut points.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, ToPrimitive};

/// A number type that can hold threshold cut points.
///
/// Scores are integers, expected thresholds are half-integers and mixture
/// thresholds are quarter-integers, so an exact rational represents every
/// value the pipeline produces. Floats are supported for callers that prefer
/// them.
pub trait Scalar:
    Num + Clone + PartialOrd + FromPrimitive + ToPrimitive + Debug + Display + FromStr + Send + Sync + 'static
{
    fn from_score(score: i64) -> Self {
        Self::from_i64(score).expect("integer score is representable in every scalar")
    }

    fn midpoint(&self, other: &Self) -> Self {
        (self.clone() + other.clone()) / (Self::one() + Self::one())
    }

    fn as_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
impl Scalar for Ratio<i32> {}
impl Scalar for Ratio<i64> {}

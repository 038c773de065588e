//! Scalar abstraction for costs, travel times and time-window bounds.
//!
//! Random keys are always `f64` (their bit pattern feeds the decoder seed),
//! but everything measured in distance or time is generic over [`Scalar`].

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type used for costs and times: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Absolute tolerance for objective comparisons and feasibility checks.
    const TOLERANCE: Self;

    /// Lossless-enough conversion from a literal.
    #[inline]
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// `a < b` by more than [`Scalar::TOLERANCE`].
    #[inline]
    fn improves_on(self, incumbent: Self) -> bool {
        if incumbent.is_infinite() && incumbent > Self::zero() {
            return self.is_finite();
        }
        self < incumbent - Self::TOLERANCE
    }

    /// `|a - b| <= TOLERANCE` (or both the same infinity).
    #[inline]
    fn approx_eq(self, other: Self) -> bool {
        if self.is_infinite() || other.is_infinite() {
            return self == other;
        }
        (self - other).abs() <= Self::TOLERANCE
    }
}

impl Scalar for f64 {
    const TOLERANCE: f64 = 1e-6;
}

impl Scalar for f32 {
    const TOLERANCE: f32 = 1e-3;
}

/// Total order on scalars for sorting; NaN sorts last.
#[inline]
pub(crate) fn cmp_scalar<S: Scalar>(a: &S, b: &S) -> std::cmp::Ordering {
    a.partial_cmp(b).unwrap_or_else(|| a.is_nan().cmp(&b.is_nan()))
}

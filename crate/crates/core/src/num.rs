//! Scalar abstraction shared by every model and solver in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type the models and solvers are generic over.
///
/// Implemented for `f32` and `f64`. The solvers are tuned for `f64`; the
/// physical-layer formulas work at either precision.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Every `f64` is representable (possibly rounded)
    /// in the implementing types, so this never fails.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }

    /// `max(x, 0)`.
    #[inline]
    fn pos(self) -> Self {
        if self > Self::zero() {
            self
        } else {
            Self::zero()
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Tolerance below which a negative value is treated as round-off rather than a bug.
pub(crate) const ROUNDOFF: f64 = 1e-12;

/// Maps values in `[-ROUNDOFF, 0)` to zero and panics on anything more negative.
///
/// Used on quantities that are non-negative by construction so round-off is
/// distinguished from logic errors.
#[inline]
#[track_caller]
pub(crate) fn nonneg<T: Real>(value: T, what: &str) -> T {
    if value >= T::zero() {
        value
    } else if value >= -T::lit(ROUNDOFF) {
        T::zero()
    } else {
        panic!("{what} must be non-negative, got {value:e}")
    }
}

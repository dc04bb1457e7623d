//! Floating-point abstraction used by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::str::FromStr;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// A real scalar the estimators can run on.
///
/// Implemented for `f32` and `f64`. Everything that touches Gram matrices or
/// moment systems is written against this trait; the concrete `f64`
/// aliases at the crate root are what the CLI and the simulation harness use.
pub trait Scalar:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + FromStr
    + Display
    + LowerExp
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    /// Relative tolerance below which a pivot in a low-rank kernel
    /// factorization counts as numerically zero.
    const FACTOR_TOL: f64;

    /// Lossless-enough conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn finite(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Scalar for f64 {
    const FACTOR_TOL: f64 = 1e-10;
}

impl Scalar for f32 {
    const FACTOR_TOL: f64 = 1e-5;
}

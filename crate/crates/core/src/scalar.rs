//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

use crate::special;

/// Floating-point scalar the fitting code is generic over.
///
/// Special functions are evaluated in `f64` and converted back, so `f32`
/// instantiations trade storage for precision but not for tail accuracy.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    fn ln_gamma(self) -> Self {
        Self::lit(special::ln_gamma(self.f64()))
    }

    fn digamma(self) -> Self {
        Self::lit(special::digamma(self.f64()))
    }

    fn erfc(self) -> Self {
        Self::lit(special::erfc(self.f64()))
    }

    fn erfcx(self) -> Self {
        Self::lit(special::erfcx(self.f64()))
    }

    fn norm_pdf(self) -> Self {
        Self::lit(special::norm_pdf(self.f64()))
    }

    fn log_norm_cdf(self) -> Self {
        Self::lit(special::log_norm_cdf(self.f64()))
    }

    fn ln_2pi() -> Self {
        Self::lit(special::LN_2PI)
    }
}

impl Real for f32 {}
impl Real for f64 {}

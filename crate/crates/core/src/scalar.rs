//! Scalar abstraction shared by the weight catalog, the influence-function
//! kernels and the exact oracle.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast};

/// Real scalar usable by the generic numerical core (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + NumCast + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts a literal; every literal used by the crate is representable.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        <f64 as NumCast>::from(self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Binary treatment value as a scalar indicator.
#[inline]
pub(crate) fn indicator<F: Scalar>(cond: bool) -> F {
    if cond {
        F::one()
    } else {
        F::zero()
    }
}

//! Scalar abstraction the numerical kernels are generic over.

use num_traits::{FromPrimitive, NumCast};

/// Floating-point scalar type of the solver.
///
/// Bundles the nalgebra field operations with the num-traits conversions used
/// for constants, counts and file output. Implemented for `f32` and `f64`;
/// the strict default tolerances throughout the crate assume `f64`.
pub trait Real:
    nalgebra::RealField
    + FromPrimitive
    + NumCast
    + Copy
    + Default
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
{
    /// Scalar from an `f64` constant.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    /// Scalar from a count.
    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Widen to `f64` for output and diagnostics.
    #[inline]
    fn to64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("real scalar widens to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

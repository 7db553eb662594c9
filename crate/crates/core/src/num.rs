//! Scalar abstraction: all pipeline math is generic over `f32`/`f64`.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar used throughout the library.
///
/// Implemented by `f32` and `f64`. The blanket impl keeps the bound list in
/// one place; everything downstream just writes `T: Scalar`.
pub trait Scalar:
    RealField + FromPrimitive + ToPrimitive + Copy + Default + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: RealField + FromPrimitive + ToPrimitive + Copy + Default + Send + Sync + 'static
{
}

/// Convert an `f64` constant into the working scalar type.
#[inline]
pub fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("constant representable in scalar type")
}

/// Convert the working scalar into `f64` (for reporting and formatting).
#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().expect("scalar convertible to f64")
}

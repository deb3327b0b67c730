//! Scalar abstraction over the floating-point type used by the solver.

use std::fmt;

use num_traits::{Float, FromPrimitive, NumCast};

/// Floating-point scalar the grid, solver, and synthesis code are generic
/// over: f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + NumCast + fmt::Debug + fmt::Display + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an f64 constant (scheme coefficients, built-in problem data) to
/// the working scalar type.
#[inline]
pub fn cast<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("finite f64 constant representable in scalar type")
}

/// `max{a, b}` propagating neither NaN; used in clamp algebra where inputs
/// are already checked finite.
#[inline]
pub fn smax<T: Scalar>(a: T, b: T) -> T {
    if a > b {
        a
    } else {
        b
    }
}

/// `min{a, b}` counterpart of [`smax`].
#[inline]
pub fn smin<T: Scalar>(a: T, b: T) -> T {
    if a < b {
        a
    } else {
        b
    }
}

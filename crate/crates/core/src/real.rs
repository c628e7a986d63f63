//! Scalar abstraction for the numeric core.

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar the whole crate is generic over: `f32` or `f64`.
///
/// Tolerances quoted throughout the crate (1e-9, 1e-12, ...) assume `f64`;
/// the `f32` instantiation compiles and runs but only meets tolerances
/// scaled to its epsilon (see [`crate::spectral::eigh`]).
pub trait Real:
    Float
    + FromPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::fmt::LowerExp
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for converting an `f64` literal into the generic scalar.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant representable in scalar type")
}

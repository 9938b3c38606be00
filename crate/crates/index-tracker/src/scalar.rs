//! Scalar abstraction for the numeric core.
//!
//! Everything under [`crate::qp`], [`crate::selector`], [`crate::baselines`]
//! and the metric functions is generic over [`Scalar`], so the same code runs
//! in `f32` or `f64`. Concrete aliases for the common `f64` instantiation
//! live at the crate root.

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar type the numeric core is generic over.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + ScalarOperand
    + LinalgScalar
    + Sum<Self>
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + ScalarOperand
        + LinalgScalar
        + Sum<Self>
        + Display
        + Debug
        + Send
        + Sync
        + 'static
{
}

/// Convert an `f64` constant or RNG draw into the working scalar type.
///
/// Panics only if `T` cannot represent ordinary finite `f64` values, which
/// cannot happen for the supported `f32`/`f64` instantiations.
#[inline]
pub fn real<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("finite f64 must convert into the scalar type")
}

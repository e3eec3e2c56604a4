//! Floating point scalar abstraction used throughout the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal, rounding to nearest.
    fn lit(x: f64) -> Self;

    /// Widens to `f64` without loss.
    fn f64(self) -> f64;

    /// Converts a count.
    fn from_count(k: usize) -> Self {
        Self::lit(k as f64)
    }
}

macro_rules! impl_scalar {
    ($($t:ty)*) => ($(
        impl Scalar for $t {
            #[inline(always)]
            fn lit(x: f64) -> Self {
                x as $t
            }
            #[inline(always)]
            fn f64(self) -> f64 {
                self as f64
            }
        }
    )*)
}

impl_scalar!(f32 f64);

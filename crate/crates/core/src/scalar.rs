//! Scalar abstraction the geometry and learning stacks are generic over.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Floating-point scalar usable throughout the crate.
///
/// Bundles the numeric traits the math needs with the serde bounds the
/// on-disk formats need. Implemented for `f32` and `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + std::fmt::Debug
    + std::fmt::Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts from `f64`. Panics only on values that do not fit, which
    /// cannot happen for the finite constants this crate feeds it.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant")
    }

    /// Widens to `f64` for serialization and reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar widens to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

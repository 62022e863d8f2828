//! Scalar abstraction shared by the probability code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};
use serde::Serialize;

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Serialize + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn from_count(x: usize) -> Self {
        Self::from_usize(x).expect("count representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

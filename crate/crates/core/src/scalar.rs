//! Scalar abstraction shared by the numerical modules.

use nalgebra::RealField;
use num_traits::FromPrimitive;
use std::fmt::{Debug, Display};

/// Real floating point type the simulator can run on (`f32` or `f64`).
pub trait Real: RealField + Copy + FromPrimitive + Debug + Display + Send + Sync + 'static {
    /// Converts a literal; panics only for values the type cannot represent at all.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable")
    }

    fn to_f64(self) -> f64;

    fn usize(n: usize) -> Self {
        Self::from_usize(n).expect("integer not representable")
    }
}

impl Real for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

/// Shorthand for `T::lit`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::lit(x)
}

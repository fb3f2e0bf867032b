//! Scalar abstraction: all core math works over any float implementing [`Real`].

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable throughout the numeric core (f32 or f64).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from f64; panics only for exotic scalar types.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 conversion")
    }

    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize conversion")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("f64 conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

//! Scalar abstraction: every numeric kernel is generic over a float type.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Element type for matrices. Implemented by `f32` and `f64`.
pub trait Scalar:
    Float + NumAssign + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float
        + NumAssign
        + FromPrimitive
        + ToPrimitive
        + Sum
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Lossy conversion from f64 used for literals and tolerances.
pub fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant must convert into the scalar type")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cast_round_trips_for_both_widths() {
        let a: f64 = cast(1.5);
        let b: f32 = cast(1.5);
        assert_eq!(a, 1.5f64);
        assert_eq!(b, 1.5f32);
    }
}

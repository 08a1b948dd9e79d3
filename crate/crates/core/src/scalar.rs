use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar the simulator is generic over.
///
/// `NORM_TOL` is the tolerance used for normalization and unitarity
/// preconditions; `UNREACHABLE` is the branch probability below which a
/// projection is reported as unreachable.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    const NORM_TOL: Self;
    const UNREACHABLE: Self;

    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar")
    }

    /// Reduce an angle into `[0, 2π)`.
    fn wrap_angle(self) -> Self {
        let tau = Self::TAU();
        let r = self % tau;
        let r = if r < Self::zero() { r + tau } else { r };
        // `r + tau` can round up to exactly tau for tiny negative inputs
        if r >= tau {
            Self::zero()
        } else {
            r
        }
    }
}

impl Scalar for f64 {
    const NORM_TOL: f64 = 1e-10;
    const UNREACHABLE: f64 = 1e-14;
}

impl Scalar for f32 {
    const NORM_TOL: f32 = 1e-5;
    const UNREACHABLE: f32 = 1e-7;
}

/// Distance between two angles on the circle, in `[0, π]`.
pub fn angle_distance<T: Scalar>(a: T, b: T) -> T {
    let d = (a - b).wrap_angle();
    d.min(T::TAU() - d)
}

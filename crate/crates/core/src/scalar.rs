//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the numerical core is generic over (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// `e^{j·angle}`.
#[inline]
pub fn cis<T: Real>(angle: T) -> Complex<T> {
    Complex::new(angle.cos(), angle.sin())
}

/// Wraps an angle into `[0, 2π)`.
#[inline]
pub fn wrap_phase<T: Real>(angle: T) -> T {
    let two_pi = T::TAU();
    let mut r = angle % two_pi;
    if r < T::zero() {
        r += two_pi;
    }
    // `-tiny % 2π + 2π` can round up to exactly 2π
    if r >= two_pi {
        r = T::zero();
    }
    r
}

/// Signed angular difference `a - b` mapped into `[-π, π)`.
#[inline]
pub fn angle_diff<T: Real>(a: T, b: T) -> T {
    wrap_phase(a - b + T::PI()) - T::PI()
}

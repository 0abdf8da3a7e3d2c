//! Floating-point element trait: f32 for training, f64 for oracles and
//! gradient checks.
//!
//! Conversion helpers carry names distinct from the `FromPrimitive` and
//! `ToPrimitive` methods so call sites never need disambiguation.

use num_traits::Float;

pub trait Scalar:
    Float + core::fmt::Debug + core::fmt::Display + Default + Send + Sync + 'static
{
    fn of_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;

    fn of_usize(x: usize) -> Self {
        Self::of_f64(x as f64)
    }
}

impl Scalar for f32 {
    fn of_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}

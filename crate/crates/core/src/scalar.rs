//! Scalar abstraction for the numeric core.

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssign};
use std::fmt;
use std::iter::Sum;

/// Floating-point scalar the numeric core is generic over.
///
/// `f32` and `f64` both qualify; experiments use `f64` throughout for
/// reproducibility.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + ScalarOperand + Sum + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Lossless-enough conversion from `f64` literals and config values.
    fn from_f64_exact(v: f64) -> Self {
        Self::from_f64(v).expect("f64 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

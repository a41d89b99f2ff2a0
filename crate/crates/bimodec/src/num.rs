//! Scalar abstraction the numeric kernels are generic over.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::ScalarOperand;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, Signed};

/// Floating-point sample type.
///
/// Everything downstream of file I/O is generic over this; the crate-root
/// aliases pin `f64`, which all shipped paths use. Times, rates and design
/// constants stay `f64` regardless of the sample type.
pub trait Scalar:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + Signed
    + Sum
    + ScalarOperand
    + rustfft::FftNum
    + Display
    + Debug
    + 'static
{
    /// Cast a design-time `f64` constant into the sample type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to any Scalar")
    }

    /// Widen a sample to `f64` for accumulation and reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar widens to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

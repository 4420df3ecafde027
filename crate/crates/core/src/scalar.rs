//! Scalar abstraction over the floating-point element types.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps};

use crate::mmt1::Dtype;

/// Element type for tensors, graphs, and model parameters.
///
/// Implemented for `f32` and `f64`. Training defaults to `f32`; gradient
/// checks instantiate everything at `f64`.
///
/// Conversion methods are named to avoid clashing with the `ToPrimitive`
/// and `FromPrimitive` methods pulled in through `Float`.
pub trait Scalar:
    Float + FromPrimitive + NumAssignOps + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Element code used by the MMT1 tensor file format.
    const DTYPE: Dtype;

    /// Conversion for constants written in source and for f64 intermediates.
    fn c(v: f64) -> Self;
    /// Widening or identity conversion from a stored f32 value.
    fn from_single(v: f32) -> Self;
    /// Exact for f32 inputs, identity for f64.
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn c(v: f64) -> Self {
        v as f32
    }
    fn from_single(v: f32) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn c(v: f64) -> Self {
        v
    }
    fn from_single(v: f32) -> Self {
        v as f64
    }
    fn as_f64(self) -> f64 {
        self
    }
}

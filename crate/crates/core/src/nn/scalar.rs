use std::fmt::{Debug, Display};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point element type the network engine is generic over.
///
/// Implemented for `f32` and `f64`. Everything in the RL stack runs on `f64`;
/// `f32` exists for cheap inference and for checking that the engine does not
/// silently depend on a concrete width.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Width in bytes, recorded in checkpoints.
    const WIDTH: u32;

    fn from_f64_lossy(value: f64) -> Self;

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f64 {
    const WIDTH: u32 = 8;

    fn from_f64_lossy(value: f64) -> Self {
        value
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut buf = [0u8; 8];
        buf.copy_from_slice(&bytes[..8]);
        f64::from_le_bytes(buf)
    }
}

impl Scalar for f32 {
    const WIDTH: u32 = 4;

    fn from_f64_lossy(value: f64) -> Self {
        value as f32
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut buf = [0u8; 4];
        buf.copy_from_slice(&bytes[..4]);
        f32::from_le_bytes(buf)
    }
}

/// Shorthand for literal constants inside generic code.
#[inline]
pub(crate) fn lit<T: Scalar>(value: f64) -> T {
    T::from_f64_lossy(value)
}

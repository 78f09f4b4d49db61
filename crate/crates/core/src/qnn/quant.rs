//! Uniform affine INT-8 quantization.
//!
//! Weights are stored as signed 8-bit codes with a per-tensor positive scale
//! and a zero point; the real value of a code `q` is `scale * (q - zero_point)`.
//! Tensors produced by this crate use the symmetric special case: the scale is
//! taken from the largest absolute value and the zero point is 0, so 0.0 is
//! exactly representable and ReLU behaves cleanly even when codes carry
//! flipped bits.

use serde::{Deserialize, Serialize};

use crate::error::{DyveError, Result};

/// Codes occupy exactly one byte.
pub const BIT_WIDTH: u32 = 8;
/// Smallest representable code.
pub const QMIN: i32 = -128;
/// Largest representable code.
pub const QMAX: i32 = 127;

/// Per-tensor quantization parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    /// Positive step between adjacent codes.
    pub scale: f64,
    /// Code that maps to 0.0; always 0 for symmetric tensors.
    pub zero_point: i32,
}

impl QuantParams {
    /// Symmetric parameters covering `values`: scale = max|v| / 127, zero
    /// point 0. An all-zero tensor gets scale 1 so the parameters stay valid.
    pub fn symmetric_for(values: &[f64]) -> QuantParams {
        let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if max_abs > 0.0 { max_abs / QMAX as f64 } else { 1.0 };
        QuantParams { scale, zero_point: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(DyveError::ModelFormat(format!(
                "scale must be positive and finite, got {}",
                self.scale
            )));
        }
        if self.zero_point < QMIN || self.zero_point > QMAX {
            return Err(DyveError::ModelFormat(format!(
                "zero point {} outside [{QMIN}, {QMAX}]",
                self.zero_point
            )));
        }
        Ok(())
    }

    /// Round to the nearest code and clamp into the representable range.
    pub fn quantize(&self, x: f64) -> i8 {
        let q = (x / self.scale).round() as i64 + i64::from(self.zero_point);
        q.clamp(i64::from(QMIN), i64::from(QMAX)) as i8
    }

    pub fn dequantize(&self, code: i8) -> f64 {
        self.scale * f64::from(i32::from(code) - self.zero_point)
    }

    /// Real interval covered without clamping.
    pub fn representable_range(&self) -> (f64, f64) {
        (
            self.dequantize(QMIN as i8),
            self.dequantize(QMAX as i8),
        )
    }
}

/// A flat array of INT-8 codes with its quantization parameters. Shape
/// information lives in the owning layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantTensor {
    pub codes: Vec<i8>,
    pub params: QuantParams,
}

impl QuantTensor {
    /// Quantize real values with symmetric per-tensor parameters.
    pub fn quantize(values: &[f64]) -> QuantTensor {
        let params = QuantParams::symmetric_for(values);
        let codes = values.iter().map(|&v| params.quantize(v)).collect();
        QuantTensor { codes, params }
    }

    pub fn dequantized(&self) -> Vec<f64> {
        self.codes.iter().map(|&c| self.params.dequantize(c)).collect()
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

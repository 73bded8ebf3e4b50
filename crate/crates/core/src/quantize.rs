//! 8-bit row-wise embedding quantization.
//!
//! Each row gets a scale `s = max|e| / (b - 1)` and codes
//! `q = floor(1/2 + e/s + b)` with `b = 128`; dequantization is
//! `(q - b) * s`. Storage per row is one f32 scale plus one byte per column.

use crate::error::{Error, Result};

/// Quantization offset `b`.
pub const QUANT_BIAS: i32 = 128;

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedRow {
    pub scale: f32,
    pub codes: Vec<u8>,
}

impl QuantizedRow {
    pub fn quantize(row: &[f32]) -> Result<Self> {
        quantize_row(row)
    }

    pub fn dequantize(&self) -> Vec<f32> {
        dequantize(self)
    }

    /// Dequantized value of column `j`, without the final f32 rounding.
    #[inline]
    pub fn value(&self, j: usize) -> f64 {
        f64::from(i32::from(self.codes[j]) - QUANT_BIAS) * f64::from(self.scale)
    }
}

pub fn quantize_row(row: &[f32]) -> Result<QuantizedRow> {
    if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
        return Err(Error::data(format!("cannot quantize non-finite value {bad}")));
    }
    let max = row.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return Ok(QuantizedRow { scale: 0.0, codes: vec![QUANT_BIAS as u8; row.len()] });
    }
    let scale = (f64::from(max) / f64::from(QUANT_BIAS - 1)) as f32;
    let s = f64::from(scale);
    let codes = row
        .iter()
        .map(|&e| {
            let q = (0.5 + f64::from(e) / s + f64::from(QUANT_BIAS)).floor();
            q.clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok(QuantizedRow { scale, codes })
}

pub fn dequantize(row: &QuantizedRow) -> Vec<f32> {
    (0..row.codes.len()).map(|j| row.value(j) as f32).collect()
}

/// Serialized size of a quantized `rows x cols` matrix: codes plus f32 scales.
pub fn quantized_matrix_bytes(rows: usize, cols: usize) -> usize {
    rows * cols + 4 * rows
}

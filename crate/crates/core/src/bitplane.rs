//! Quantized tensors, bit-plane decomposition and the exact integer VMM.
//!
//! Weights are signed and sliced in two's complement: plane 7 carries
//! magnitude `-2^7`, every other plane `+2^b`. Activations are unsigned.
//! [`reference_vmm`] is the ground truth every error measurement is taken
//! against.

use crate::error::{Error, Result};

/// Number of bit planes a value is sliced into.
pub const PLANES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    dims: Vec<usize>,
    values: Vec<i32>,
    signed: bool,
    bits: u8,
    scale: f64,
    zero_point: i32,
}

impl QuantizedTensor {
    pub fn new(
        dims: Vec<usize>,
        values: Vec<i32>,
        signed: bool,
        bits: u8,
        scale: f64,
    ) -> Result<Self> {
        if !(1..=8).contains(&bits) {
            return Err(Error::InvalidArgument(format!(
                "bits must be in 1..=8, got {bits}"
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scale must be positive, got {scale}"
            )));
        }
        let expected: usize = dims.iter().product();
        if expected != values.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} describe {expected} values but {} were given",
                values.len()
            )));
        }
        let (lo, hi) = int_range(bits, signed);
        if let Some(bad) = values.iter().find(|v| **v < lo || **v > hi) {
            return Err(Error::InvalidArgument(format!(
                "value {bad} outside [{lo}, {hi}] for {bits}-bit {} data",
                if signed { "signed" } else { "unsigned" }
            )));
        }
        Ok(Self {
            dims,
            values,
            signed,
            bits,
            scale,
            zero_point: 0,
        })
    }

    /// Unsigned activation vector with unit scale.
    pub fn activations(values: Vec<i32>) -> Result<Self> {
        let n = values.len();
        Self::new(vec![n], values, false, 8, 1.0)
    }

    /// Signed `rows x cols` weight matrix with unit scale.
    pub fn weights(rows: usize, cols: usize, values: Vec<i32>) -> Result<Self> {
        Self::new(vec![rows, cols], values, true, 8, 1.0)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[i32] {
        &self.values
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn zero_point(&self) -> i32 {
        self.zero_point
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dequantize(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|&v| (v - self.zero_point) as f64 * self.scale)
            .collect()
    }

    /// Same data viewed with new dims; the element count must match.
    pub fn reshaped(mut self, dims: Vec<usize>) -> Result<Self> {
        if dims.iter().product::<usize>() != self.values.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {} values to {dims:?}",
                self.values.len()
            )));
        }
        self.dims = dims;
        Ok(self)
    }
}

/// Inclusive integer range representable with `bits` bits.
pub fn int_range(bits: u8, signed: bool) -> (i32, i32) {
    if signed {
        (-(1 << (bits - 1)), (1 << (bits - 1)) - 1)
    } else {
        (0, (1 << bits) - 1)
    }
}

/// Symmetric max-abs quantization, rounding half away from zero.
///
/// Signed data maps `max|x|` to `2^(bits-1) - 1`; unsigned data maps it to
/// `2^bits - 1` and clamps negatives to zero. An all-zero tensor gets scale 1.
pub fn quantize_affine(
    real: &[f64],
    dims: Vec<usize>,
    bits: u8,
    signed: bool,
) -> Result<QuantizedTensor> {
    if !(1..=8).contains(&bits) {
        return Err(Error::InvalidArgument(format!(
            "bits must be in 1..=8, got {bits}"
        )));
    }
    if real.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "tensor contains non-finite values".into(),
        ));
    }
    let qmax = if signed {
        (1i32 << (bits - 1)) - 1
    } else {
        (1i32 << bits) - 1
    };
    let qmin = if signed { -qmax } else { 0 };
    let max_abs = real.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if max_abs == 0.0 || qmax == 0 {
        1.0
    } else {
        max_abs / qmax as f64
    };
    let values = real
        .iter()
        .map(|&v| ((v / scale).round() as i32).clamp(qmin, qmax))
        .collect();
    QuantizedTensor::new(dims, values, signed, bits, scale)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BitPlane {
    pub bit_index: usize,
    pub bits: Vec<u8>,
    pub magnitude: i64,
}

/// Magnitude applied to plane `bit` after the binary product.
#[inline]
pub fn plane_magnitude(bit: usize, signed: bool) -> i64 {
    if signed && bit == PLANES - 1 {
        -(1i64 << bit)
    } else {
        1i64 << bit
    }
}

#[inline]
pub fn bit_of(value: i32, bit: usize) -> u8 {
    ((value as u8 >> bit) & 1) as u8
}

pub fn slice_bits(q: &QuantizedTensor) -> Vec<BitPlane> {
    (0..PLANES)
        .map(|b| BitPlane {
            bit_index: b,
            bits: q.values.iter().map(|&v| bit_of(v, b)).collect(),
            magnitude: plane_magnitude(b, q.signed),
        })
        .collect()
}

/// Shift-and-add recomposition of sliced planes.
pub fn reconstruct(planes: &[BitPlane]) -> Vec<i64> {
    let len = planes.first().map_or(0, |p| p.bits.len());
    let mut out = vec![0i64; len];
    for plane in planes {
        for (o, &b) in out.iter_mut().zip(&plane.bits) {
            *o += plane.magnitude * b as i64;
        }
    }
    out
}

/// Exact `y = W x` with `W` laid out `[out, in]`.
pub fn reference_vmm(w: &QuantizedTensor, x: &QuantizedTensor) -> Result<Vec<i64>> {
    let (rows, cols) = match w.dims() {
        [r, c] => (*r, *c),
        d => {
            return Err(Error::Shape(format!(
                "weight must be rank 2, got dims {d:?}"
            )))
        }
    };
    if x.len() != cols {
        return Err(Error::Shape(format!(
            "weight has {cols} inputs but vector has {} entries",
            x.len()
        )));
    }
    Ok(matvec(w.values(), rows, cols, x.values()))
}

pub(crate) fn matvec(w: &[i32], rows: usize, cols: usize, x: &[i32]) -> Vec<i64> {
    (0..rows)
        .map(|r| {
            w[r * cols..(r + 1) * cols]
                .iter()
                .zip(x)
                .map(|(&a, &b)| a as i64 * b as i64)
                .sum()
        })
        .collect()
}

//! Affine integer quantization.
//!
//! `quantize(x) = clip(round(x / S) + Z, a, b)` and
//! `dequantize(q) = (q - Z) * S`, where `S`, `Z` are vectors indexed by
//! the slice an element belongs to (one slice for per-tensor parameters).
//! Rounding is half-to-even everywhere, including the fused integer path.

mod state;

pub use state::{fake_quantize, Granularity, QuantizerSpec, QuantizerState, ScaleGrad};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest scale produced by calibration.
pub const SCALE_FLOOR: f64 = 1e-8;

pub fn round_half_even(x: f64) -> f64 {
    x.round_ties_even()
}

/// Integer range `[a, b]` for a bit-width.
pub fn qrange(bits: u32, signed: bool) -> Result<(i64, i64)> {
    if !(1..=32).contains(&bits) {
        return Err(Error::invalid(format!("bit-width {bits} outside 1..=32")));
    }
    Ok(if signed {
        (-(1i64 << (bits - 1)), (1i64 << (bits - 1)) - 1)
    } else {
        (0, (1i64 << bits) - 1)
    })
}

/// Maps each flat element index of a tensor to its quantization slice.
#[derive(Clone, Debug, PartialEq)]
pub enum SliceLayout {
    Whole,
    /// Row-major 2-D tensor, one slice per row.
    Rows {
        cols: usize,
    },
    /// Row-major 2-D tensor, one slice per column.
    Cols {
        cols: usize,
    },
    /// Explicit slice index per element (e.g. the row of each stored
    /// nonzero of a sparse matrix).
    Entries(Arc<[usize]>),
}

impl SliceLayout {
    #[inline]
    pub fn slice(&self, i: usize) -> usize {
        match self {
            SliceLayout::Whole => 0,
            SliceLayout::Rows { cols } => i / cols,
            SliceLayout::Cols { cols } => i % cols,
            SliceLayout::Entries(map) => map[i],
        }
    }

    /// Layout of a dense tensor of `shape` under `granularity`.
    pub fn dense(granularity: Granularity, shape: &[usize]) -> Self {
        let cols = if shape.len() >= 2 {
            shape[1..].iter().product()
        } else {
            1
        };
        match granularity {
            Granularity::PerTensor => SliceLayout::Whole,
            Granularity::PerRow => SliceLayout::Rows { cols },
            Granularity::PerColumn => SliceLayout::Cols { cols },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scale: Vec<f64>,
    /// Stored continuous; rounded (and clipped to the range) at use.
    pub zero_point: Vec<f64>,
    pub bits: u32,
    pub signed: bool,
}

impl QuantParams {
    pub fn new(scale: Vec<f64>, zero_point: Vec<f64>, bits: u32, signed: bool) -> Result<Self> {
        qrange(bits, signed)?;
        if scale.is_empty() || scale.len() != zero_point.len() {
            return Err(Error::invalid(
                "scale and zero-point must be non-empty and equally long",
            ));
        }
        if let Some(s) = scale.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid(format!(
                "scale {s} must be positive and finite"
            )));
        }
        if zero_point.iter().any(|z| !z.is_finite()) {
            return Err(Error::invalid("zero-point must be finite"));
        }
        Ok(QuantParams {
            scale,
            zero_point,
            bits,
            signed,
        })
    }

    pub fn per_tensor(scale: f64, zero_point: f64, bits: u32, signed: bool) -> Result<Self> {
        Self::new(vec![scale], vec![zero_point], bits, signed)
    }

    /// `S = 1, Z = 0` over a 32-bit signed range: the output of the fused
    /// aggregation is left as the rescaled real product.
    pub fn identity(slices: usize) -> Self {
        QuantParams {
            scale: vec![1.0; slices],
            zero_point: vec![0.0; slices],
            bits: 32,
            signed: true,
        }
    }

    pub fn slices(&self) -> usize {
        self.scale.len()
    }

    pub fn range(&self) -> (i64, i64) {
        qrange(self.bits, self.signed).expect("validated bit-width")
    }

    #[inline]
    pub fn scale_at(&self, k: usize) -> f64 {
        self.scale[if self.scale.len() == 1 { 0 } else { k }]
    }

    /// Integer zero-point of slice `k`.
    #[inline]
    pub fn zero_at(&self, k: usize) -> i64 {
        let (a, b) = self.range();
        let z = self.zero_point[if self.zero_point.len() == 1 { 0 } else { k }];
        (round_half_even(z) as i64).clamp(a, b)
    }

    pub fn max_scale(&self) -> f64 {
        self.scale.iter().copied().fold(0.0, f64::max)
    }

    /// Quantizes one value already divided into its slice.
    #[inline]
    pub(crate) fn quantize_one(&self, x: f64, k: usize) -> i64 {
        let (a, b) = self.range();
        let v = round_half_even(x / self.scale_at(k)) + self.zero_at(k) as f64;
        v.clamp(a as f64, b as f64) as i64
    }
}

fn check_layout(len: usize, layout: &SliceLayout, q: &QuantParams) -> Result<()> {
    if len == 0 {
        return Ok(());
    }
    let max_slice = match layout {
        SliceLayout::Whole => 0,
        SliceLayout::Rows { cols } => (len - 1) / cols,
        SliceLayout::Cols { cols } => (*cols).min(len) - 1,
        SliceLayout::Entries(map) => {
            if map.len() != len {
                return Err(Error::dim(format!(
                    "layout covers {} of {len} elements",
                    map.len()
                )));
            }
            map.iter().copied().max().unwrap_or(0)
        }
    };
    if q.slices() != 1 && max_slice >= q.slices() {
        return Err(Error::dim(format!(
            "layout needs {} slices, parameters have {}",
            max_slice + 1,
            q.slices()
        )));
    }
    Ok(())
}

pub fn quantize(x: &[f64], layout: &SliceLayout, q: &QuantParams) -> Result<Vec<i64>> {
    check_layout(x.len(), layout, q)?;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            if !v.is_finite() {
                return Err(Error::Domain(format!(
                    "cannot quantize non-finite value {v}"
                )));
            }
            Ok(q.quantize_one(v, layout.slice(i)))
        })
        .collect()
}

pub fn dequantize(xq: &[i64], layout: &SliceLayout, q: &QuantParams) -> Result<Vec<f64>> {
    check_layout(xq.len(), layout, q)?;
    Ok(xq
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let k = layout.slice(i);
            (v - q.zero_at(k)) as f64 * q.scale_at(k)
        })
        .collect())
}

/// `dequantize(quantize(x))` without autodiff.
pub fn fake_quantize_values(x: &[f64], layout: &SliceLayout, q: &QuantParams) -> Result<Vec<f64>> {
    dequantize(&quantize(x, layout, q)?, layout, q)
}

/// Min-max parameters per slice over a range widened to contain zero.
///
/// `S = (max - min) / (b - a)` floored at [`SCALE_FLOOR`],
/// `Z = a - min / S`; symmetric mode uses `S = max|x| / b`, `Z = 0`.
pub fn minmax_params(
    x: &[f64],
    layout: &SliceLayout,
    slices: usize,
    bits: u32,
    signed: bool,
    symmetric: bool,
) -> Result<QuantParams> {
    if x.is_empty() {
        return Err(Error::invalid("calibration batch is empty"));
    }
    let (a, b) = qrange(bits, signed)?;
    let mut lo = vec![0.0f64; slices];
    let mut hi = vec![0.0f64; slices];
    for (i, &v) in x.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Domain(format!("non-finite calibration value {v}")));
        }
        let k = layout.slice(i);
        if k >= slices {
            return Err(Error::dim(format!("slice {k} out of {slices}")));
        }
        lo[k] = lo[k].min(v);
        hi[k] = hi[k].max(v);
    }
    let mut scale = Vec::with_capacity(slices);
    let mut zero = Vec::with_capacity(slices);
    for k in 0..slices {
        if symmetric {
            let m = lo[k].abs().max(hi[k].abs());
            scale.push((m / b.max(1) as f64).max(SCALE_FLOOR));
            zero.push(0.0);
        } else {
            let s = ((hi[k] - lo[k]) / (b - a) as f64).max(SCALE_FLOOR);
            scale.push(s);
            zero.push(round_half_even(a as f64 - lo[k] / s).clamp(a as f64, b as f64));
        }
    }
    QuantParams::new(scale, zero, bits, signed)
}

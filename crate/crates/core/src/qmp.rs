//! Quantized message passing.
//!
//! With adjacency `A` quantized per row (`S_a`, `Z_a` over the stored
//! entries) and features `X` per column (`S_x`, `Z_x`), the real product
//! of the dequantized operands is
//!
//! ```text
//! Y_ij = S_a,i S_x,j [ P_ij - Z_x,j R_i - Z_a,i N_ij + Z_a,i Z_x,j d_i ]
//! ```
//!
//! where `P = Q_a Q_x` (integer spmm), `R_i = sum_k Q_a,ik`,
//! `N = pattern(A) Q_x` and `d_i` is the stored-entry count of row `i`.
//! Everything inside the bracket is integer, so the output quantizer sees
//! `round(C1_i * bracket_ij * C2_j) + Z_y` with `C1 = S_a`, `C2 = S_x / S_y`.
//! Only stored entries of `A` are quantized; structural zeros stay zero.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quant::{
    dequantize, quantize, round_half_even, Granularity, QuantParams, QuantizerState, SliceLayout,
};
use crate::sparse::{spmm_values, CsrMatrix};
use crate::tensor::{ParamStore, Tape, Tensor, Var};

/// Dense row-major integer matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i64>,
}

impl IntMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<i64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(IntMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[i64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn max_abs(&self) -> i64 {
        self.data.iter().map(|v| v.abs()).max().unwrap_or(0)
    }
}

/// Slice layout of a stored-entry vector of `a` under `granularity`.
pub fn sparse_layout(a: &CsrMatrix<impl Copy>, granularity: Granularity) -> Result<SliceLayout> {
    match granularity {
        Granularity::PerTensor => Ok(SliceLayout::Whole),
        Granularity::PerRow => Ok(SliceLayout::Entries(Arc::from(a.entry_rows()))),
        Granularity::PerColumn => Err(Error::invalid(
            "adjacency scales must be per-tensor or per-row for the integer fusion",
        )),
    }
}

fn check_fits(nnz_row: usize, qa: i64, qx: i64) -> Result<()> {
    let bound = nnz_row as i128 * qa as i128 * qx as i128;
    if bound > i64::MAX as i128 {
        return Err(Error::Overflow(format!(
            "{nnz_row} entries x |qa| {qa} x |qx| {qx} exceeds the 64-bit accumulator"
        )));
    }
    Ok(())
}

/// Exact integer sparse-dense product.
pub fn spmm_int(qa: &CsrMatrix<i64>, qx: &IntMatrix) -> Result<IntMatrix> {
    if qa.n_cols() != qx.rows {
        return Err(Error::dim(format!(
            "spmm_int: {}x{} times {}x{}",
            qa.n_rows(),
            qa.n_cols(),
            qx.rows,
            qx.cols
        )));
    }
    let max_qa = qa.values().iter().map(|v| v.abs()).max().unwrap_or(0);
    check_fits(qa.max_row_nnz(), max_qa, qx.max_abs())?;
    let f = qx.cols;
    let mut out = IntMatrix::zeros(qa.n_rows(), f);
    for i in 0..qa.n_rows() {
        let (cols, vals) = qa.row(i);
        let dst = &mut out.data[i * f..(i + 1) * f];
        for (&k, &a) in cols.iter().zip(vals) {
            for (d, &x) in dst.iter_mut().zip(qx.row(k)) {
                *d += a * x;
            }
        }
    }
    Ok(out)
}

/// `C1`, `C2` and the factored `C3` of the fused aggregation.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedConstants {
    /// `S_a` per output row.
    pub c1: Vec<f64>,
    /// `S_x / S_y` per output column.
    pub c2: Vec<f64>,
    /// `R_i = sum_k Q_a,ik`.
    pub row_sum: Vec<i64>,
    /// `N = pattern(A) Q_x`, row-major `n x f`.
    pub pattern_x: IntMatrix,
    pub degree: Vec<i64>,
    pub za: Vec<i64>,
    pub zx: Vec<i64>,
    pub zy: Vec<i64>,
}

impl FusedConstants {
    pub fn rows(&self) -> usize {
        self.c1.len()
    }

    pub fn cols(&self) -> usize {
        self.c2.len()
    }

    /// Zero-point correction inside the bracket.
    #[inline]
    pub fn correction(&self, i: usize, j: usize) -> i64 {
        -self.zx[j] * self.row_sum[i] - self.za[i] * self.pattern_x.get(i, j)
            + self.za[i] * self.zx[j] * self.degree[i]
    }

    /// `C3_ij = C1_i C2_j correction_ij + Z_y,j`, materialized.
    pub fn c3(&self, i: usize, j: usize) -> f64 {
        self.c1[i] * self.c2[j] * self.correction(i, j) as f64 + self.zy[j] as f64
    }

    pub fn c3_dense(&self) -> Tensor {
        let (n, f) = (self.rows(), self.cols());
        let data = (0..n * f).map(|t| self.c3(t / f, t % f)).collect();
        Tensor::new(vec![n, f], data).expect("c3 shape")
    }
}

/// Broadcast a per-tensor or per-slice vector to `len`.
fn expand<T: Copy>(v: &[T], len: usize) -> Vec<T> {
    if v.len() == 1 {
        vec![v[0]; len]
    } else {
        v.to_vec()
    }
}

fn check_slices(name: &str, p: &QuantParams, len: usize) -> Result<()> {
    if p.slices() != 1 && p.slices() != len {
        return Err(Error::dim(format!(
            "{name}: {} slices, expected 1 or {len}",
            p.slices()
        )));
    }
    Ok(())
}

/// Builds the fused constants. `params_y = None` selects identity output
/// (`S_y = 1`, `Z_y = 0`).
pub fn fuse_constants(
    params_a: &QuantParams,
    params_x: &QuantParams,
    params_y: Option<&QuantParams>,
    qa: &CsrMatrix<i64>,
    qx: &IntMatrix,
) -> Result<FusedConstants> {
    let (n, f) = (qa.n_rows(), qx.cols);
    if qa.n_cols() != qx.rows {
        return Err(Error::dim("adjacency and feature shapes disagree"));
    }
    check_slices("adjacency", params_a, n)?;
    check_slices("features", params_x, f)?;
    let identity = QuantParams::identity(1);
    let py = params_y.unwrap_or(&identity);
    check_slices("output", py, f)?;
    if py.scale.contains(&0.0) {
        return Err(Error::invalid("output scale is zero"));
    }
    let sa = expand(&params_a.scale, n);
    let sx = expand(&params_x.scale, f);
    let sy = expand(&py.scale, f);
    let za = (0..n).map(|i| params_a.zero_at(i)).collect();
    let zx = (0..f).map(|j| params_x.zero_at(j)).collect();
    let zy = (0..f).map(|j| py.zero_at(j)).collect();
    let ones = qa.map_values(|_| 1i64);
    let max_qa = qa.values().iter().map(|v| v.abs()).max().unwrap_or(0);
    let max_za = (0..params_a.slices())
        .map(|k| params_a.zero_at(k).abs())
        .max()
        .unwrap_or(0);
    let max_zx = (0..params_x.slices())
        .map(|k| params_x.zero_at(k).abs())
        .max()
        .unwrap_or(0);
    check_fits(qa.max_row_nnz(), max_qa + max_za, qx.max_abs() + max_zx)?;
    Ok(FusedConstants {
        c1: sa,
        c2: sx.iter().zip(&sy).map(|(x, y)| x / y).collect(),
        row_sum: (0..n).map(|i| qa.row(i).1.iter().sum()).collect(),
        pattern_x: spmm_int(&ones, qx)?,
        degree: (0..n).map(|i| qa.row_nnz(i) as i64).collect(),
        za,
        zx,
        zy,
    })
}

/// Integer operands of one aggregation plus their fused constants.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedAggregation {
    pub qa: CsrMatrix<i64>,
    pub qx: IntMatrix,
    pub params_a: QuantParams,
    pub params_x: QuantParams,
    /// `None` is identity output.
    pub params_y: Option<QuantParams>,
    pub fused: FusedConstants,
}

impl QuantizedAggregation {
    pub fn new(
        qa: CsrMatrix<i64>,
        qx: IntMatrix,
        params_a: QuantParams,
        params_x: QuantParams,
        params_y: Option<QuantParams>,
    ) -> Result<Self> {
        let (a_lo, a_hi) = params_a.range();
        if qa.values().iter().any(|v| !(a_lo..=a_hi).contains(v)) {
            return Err(Error::invalid("adjacency codes outside their range"));
        }
        let (x_lo, x_hi) = params_x.range();
        if qx.data.iter().any(|v| !(x_lo..=x_hi).contains(v)) {
            return Err(Error::invalid("feature codes outside their range"));
        }
        let fused = fuse_constants(&params_a, &params_x, params_y.as_ref(), &qa, &qx)?;
        Ok(QuantizedAggregation {
            qa,
            qx,
            params_a,
            params_x,
            params_y,
            fused,
        })
    }

    /// Quantizes real operands: `a` per `params_a` slices (per-tensor or
    /// per-row), `x` per-tensor or per-column.
    pub fn from_real(
        a: &CsrMatrix<f64>,
        x: &Tensor,
        params_a: QuantParams,
        params_x: QuantParams,
        params_y: Option<QuantParams>,
    ) -> Result<Self> {
        let qa = quantize_adjacency(a, &params_a)?;
        let qx = quantize_features(x, &params_x)?;
        Self::new(qa, qx, params_a, params_x, params_y)
    }
}

pub fn quantize_adjacency(a: &CsrMatrix<f64>, p: &QuantParams) -> Result<CsrMatrix<i64>> {
    let gran = if p.slices() == 1 {
        Granularity::PerTensor
    } else {
        Granularity::PerRow
    };
    let codes = quantize(a.values(), &sparse_layout(a, gran)?, p)?;
    a.with_values(codes)
}

pub fn quantize_features(x: &Tensor, p: &QuantParams) -> Result<IntMatrix> {
    if x.shape().len() != 2 {
        return Err(Error::dim("features must be a matrix"));
    }
    let layout = if p.slices() == 1 {
        SliceLayout::Whole
    } else {
        SliceLayout::Cols { cols: x.cols() }
    };
    IntMatrix::new(x.rows(), x.cols(), quantize(x.data(), &layout, p)?)
}

pub fn dequantize_features(q: &IntMatrix, p: &QuantParams) -> Result<Tensor> {
    let layout = if p.slices() == 1 {
        SliceLayout::Whole
    } else {
        SliceLayout::Cols { cols: q.cols }
    };
    Tensor::new(vec![q.rows, q.cols], dequantize(&q.data, &layout, p)?)
}

/// Output of the integer aggregation.
#[derive(Clone, Debug, PartialEq)]
pub enum AggregateOutput {
    Quantized(IntMatrix),
    /// Identity output: the rescaled real product, not re-quantized.
    Real(Tensor),
}

impl AggregateOutput {
    pub fn to_real(&self, params_y: Option<&QuantParams>) -> Result<Tensor> {
        match (self, params_y) {
            (AggregateOutput::Real(t), _) => Ok(t.clone()),
            (AggregateOutput::Quantized(q), Some(p)) => dequantize_features(q, p),
            (AggregateOutput::Quantized(_), None) => {
                Err(Error::invalid("quantized output needs its parameters"))
            }
        }
    }
}

/// `clip(round(C1 * (P + correction) * C2) + Z_y)`, or the unrounded
/// `C1 * (P + correction) * S_x` in identity mode.
pub fn quantized_aggregate(agg: &QuantizedAggregation) -> Result<AggregateOutput> {
    let p = spmm_int(&agg.qa, &agg.qx)?;
    let c = &agg.fused;
    let (n, f) = (c.rows(), c.cols());
    let bracket = |i: usize, j: usize| (p.get(i, j) + c.correction(i, j)) as f64;
    match &agg.params_y {
        None => {
            let data = (0..n * f)
                .map(|t| c.c1[t / f] * bracket(t / f, t % f) * c.c2[t % f])
                .collect();
            Ok(AggregateOutput::Real(Tensor::new(vec![n, f], data)?))
        }
        Some(py) => {
            let (lo, hi) = py.range();
            let data = (0..n * f)
                .map(|t| {
                    let (i, j) = (t / f, t % f);
                    let v = round_half_even(c.c1[i] * bracket(i, j) * c.c2[j]) + c.zy[j] as f64;
                    v.clamp(lo as f64, hi as f64) as i64
                })
                .collect();
            Ok(AggregateOutput::Quantized(IntMatrix::new(n, f, data)?))
        }
    }
}

/// Real-valued simulated path: `fq_y(spmm(fq_a(A), fq_x(X)))` without
/// autodiff. Returns the product before the output quantizer as well.
pub fn fake_aggregate_values(
    a: &CsrMatrix<f64>,
    x: &Tensor,
    params_a: &QuantParams,
    params_x: &QuantParams,
    params_y: Option<&QuantParams>,
) -> Result<(Tensor, Tensor)> {
    let qa = quantize_adjacency(a, params_a)?;
    let gran = if params_a.slices() == 1 {
        Granularity::PerTensor
    } else {
        Granularity::PerRow
    };
    let fa = dequantize(qa.values(), &sparse_layout(a, gran)?, params_a)?;
    let fx = dequantize_features(&quantize_features(x, params_x)?, params_x)?;
    let y = spmm_values(a, &fa, &fx)?;
    let out = match params_y {
        None => y.clone(),
        Some(py) => dequantize_features(&quantize_features(&y, py)?, py)?,
    };
    Ok((y, out))
}

/// Differentiable simulated aggregation over a fixed sparsity pattern.
/// `a_values` holds the stored entries of `pattern`.
#[allow(clippy::too_many_arguments)]
pub fn fake_quantized_aggregate<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    pattern: &Arc<CsrMatrix<f64>>,
    a_values: Var<'t>,
    x: Var<'t>,
    qa: &QuantizerState,
    qx: &QuantizerState,
    qy: Option<&QuantizerState>,
) -> Result<Var<'t>> {
    let la = sparse_layout(pattern, qa.spec.granularity)?;
    let fa = qa.forward(tape, store, a_values, &la)?;
    let fx = qx.forward(
        tape,
        store,
        x,
        &SliceLayout::dense(qx.spec.granularity, &x.shape()),
    )?;
    let y = fa.spmm(pattern, fx)?;
    match qy {
        None => Ok(y),
        Some(q) => q.forward(
            tape,
            store,
            y,
            &SliceLayout::dense(q.spec.granularity, &y.shape()),
        ),
    }
}

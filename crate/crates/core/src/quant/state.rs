use serde::{Deserialize, Serialize};

use super::{minmax_params, qrange, round_half_even, QuantParams, SliceLayout};
use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    PerTensor,
    PerRow,
    PerColumn,
}

/// Gradient of the fake-quantized output with respect to `S`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleGrad {
    /// Rounding treated as identity: `q - Z - x/S` inside the range,
    /// `q - Z` where clipped.
    #[default]
    Ste,
    /// Piecewise derivative at fixed `x`: `q - Z` everywhere.
    Exact,
}

/// Static configuration of one quantizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub bits: u32,
    pub signed: bool,
    pub granularity: Granularity,
    /// Zero-point pinned at 0 and scale from `max|x|`.
    pub symmetric: bool,
    pub learnable: bool,
    /// Scale the `log S` gradient by `1/sqrt(count * b_hi)`.
    pub grad_scale: bool,
    #[serde(default)]
    pub scale_grad: ScaleGrad,
}

impl QuantizerSpec {
    pub fn new(bits: u32, signed: bool) -> Self {
        QuantizerSpec {
            bits,
            signed,
            granularity: Granularity::PerTensor,
            symmetric: false,
            learnable: true,
            grad_scale: true,
            scale_grad: ScaleGrad::Ste,
        }
    }

    pub fn with_granularity(mut self, g: Granularity) -> Self {
        self.granularity = g;
        self
    }

    pub fn symmetric(mut self) -> Self {
        self.symmetric = true;
        self
    }

    pub fn range(&self) -> Result<(i64, i64)> {
        qrange(self.bits, self.signed)
    }
}

/// A quantizer whose `log S` and `Z` live in a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizerState {
    pub spec: QuantizerSpec,
    pub log_scale: ParamId,
    pub zero_point: ParamId,
    pub slices: usize,
    pub calibrated: bool,
}

impl QuantizerState {
    /// Registers `{prefix}.log_scale` and `{prefix}.zero_point`.
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        spec: QuantizerSpec,
        slices: usize,
    ) -> Result<Self> {
        spec.range()?;
        if slices == 0 {
            return Err(Error::invalid("quantizer needs at least one slice"));
        }
        if spec.symmetric && !spec.signed {
            return Err(Error::invalid("symmetric quantizers must be signed"));
        }
        let ls = Tensor::zeros(&[slices]);
        let z = Tensor::zeros(&[slices]);
        let log_scale = if spec.learnable {
            store.add(format!("{prefix}.log_scale"), ls)
        } else {
            store.add_frozen(format!("{prefix}.log_scale"), ls)
        };
        let zero_point = if spec.learnable && !spec.symmetric {
            store.add(format!("{prefix}.zero_point"), z)
        } else {
            store.add_frozen(format!("{prefix}.zero_point"), z)
        };
        Ok(QuantizerState {
            spec,
            log_scale,
            zero_point,
            slices,
            calibrated: false,
        })
    }

    pub fn params(&self, store: &ParamStore) -> QuantParams {
        QuantParams {
            scale: store
                .value(self.log_scale)
                .data()
                .iter()
                .map(|v| v.exp())
                .collect(),
            zero_point: store.value(self.zero_point).data().to_vec(),
            bits: self.spec.bits,
            signed: self.spec.signed,
        }
    }

    /// Explicit initialization; marks the quantizer calibrated.
    pub fn set_params(&mut self, store: &mut ParamStore, q: &QuantParams) -> Result<()> {
        if q.slices() != self.slices {
            return Err(Error::dim(format!(
                "{} slices given, quantizer has {}",
                q.slices(),
                self.slices
            )));
        }
        if q.bits != self.spec.bits || q.signed != self.spec.signed {
            return Err(Error::invalid(
                "parameters disagree with the quantizer bit-width",
            ));
        }
        let ls = q.scale.iter().map(|s| s.ln()).collect();
        store.set_value(self.log_scale, Tensor::new(vec![self.slices], ls)?);
        store.set_value(
            self.zero_point,
            Tensor::new(vec![self.slices], q.zero_point.clone())?,
        );
        self.calibrated = true;
        Ok(())
    }

    pub fn calibrate_minmax(
        &mut self,
        store: &mut ParamStore,
        x: &[f64],
        layout: &SliceLayout,
    ) -> Result<()> {
        let q = minmax_params(
            x,
            layout,
            self.slices,
            self.spec.bits,
            self.spec.signed,
            self.spec.symmetric,
        )?;
        self.set_params(store, &q)
    }

    /// Differentiable `dequantize(quantize(x))`.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        x: Var<'t>,
        layout: &SliceLayout,
    ) -> Result<Var<'t>> {
        if !self.calibrated {
            return Err(Error::state("quantizer used before calibration"));
        }
        let ls = tape.param(store, self.log_scale);
        let z = tape.param(store, self.zero_point);
        fake_quantize(x, ls, z, layout, &self.spec)
    }
}

/// Fake quantization with straight-through gradients.
///
/// Input gradient passes where `round(x/S) + round(Z)` lies in `[a, b]`.
/// The scale gradient follows `spec.scale_grad` (taken through `log S`);
/// `d out / d Z` is `0` inside the range and `-S` where the value was
/// clipped.
pub fn fake_quantize<'t>(
    x: Var<'t>,
    log_scale: Var<'t>,
    zero_point: Var<'t>,
    layout: &SliceLayout,
    spec: &QuantizerSpec,
) -> Result<Var<'t>> {
    let (a, b) = spec.range()?;
    let slices = log_scale.value().numel();
    if zero_point.value().numel() != slices {
        return Err(Error::dim("scale and zero-point lengths differ"));
    }
    let n = x.value().numel();
    let slice_of: Vec<usize> = (0..n).map(|i| layout.slice(i)).collect();
    if let Some(&k) = slice_of.iter().find(|&&k| k >= slices) {
        return Err(Error::dim(format!("element maps to slice {k} of {slices}")));
    }
    let mut counts = vec![0usize; slices];
    for &k in &slice_of {
        counts[k] += 1;
    }

    // per element: (inside, q - zr)
    let mut inside = vec![false; n];
    let mut offset = vec![0.0f64; n];
    let (xv, ls, zv) = (x.value(), log_scale.value(), zero_point.value());
    let mut out = Vec::with_capacity(n);
    for (i, &xi) in xv.data().iter().enumerate() {
        if !xi.is_finite() {
            return Err(Error::Domain(format!(
                "cannot quantize non-finite value {xi}"
            )));
        }
        let k = slice_of[i];
        let s = ls.data()[k].exp();
        let zr = round_half_even(zv.data()[k]).clamp(a as f64, b as f64);
        let raw = round_half_even(xi / s) + zr;
        let q = raw.clamp(a as f64, b as f64);
        inside[i] = raw == q;
        out.push((q - zr) * s);
        offset[i] = match spec.scale_grad {
            ScaleGrad::Ste if inside[i] => q - zr - xi / s,
            _ => q - zr,
        };
    }
    let out = Tensor::new(xv.shape().to_vec(), out)?;
    let grad_scale = spec.grad_scale;
    x.tape()
        .custom(&[x, log_scale, zero_point], move |_| Ok(out), {
            move |g, v| {
                let ls = &v[1];
                let mut gx = vec![0.0; n];
                let mut gls = vec![0.0; slices];
                let mut gz = vec![0.0; slices];
                for (i, &gi) in g.data().iter().enumerate() {
                    let k = slice_of[i];
                    let s = ls.data()[k].exp();
                    if inside[i] {
                        gx[i] = gi;
                    } else {
                        gz[k] -= gi * s;
                    }
                    gls[k] += gi * offset[i] * s;
                }
                if grad_scale {
                    for (k, g) in gls.iter_mut().enumerate() {
                        *g /= ((counts[k].max(1) * b.max(1) as usize) as f64).sqrt();
                    }
                }
                vec![
                    Some(Tensor::new(v[0].shape().to_vec(), gx).expect("x shape")),
                    Some(Tensor::new(vec![slices], gls).expect("slices")),
                    Some(Tensor::new(vec![slices], gz).expect("slices")),
                ]
            }
        })
}

//! Integer-only inference of a finalized model.
//!
//! Activations travel as integer codes with per-tensor `(S, Z)`. Linear
//! maps accumulate `(q_h - Z_h)(q_w - Z_w)` in 64 bits and requantize once;
//! aggregations go through the fused sparse kernel; relu is `max(q, Z)`.

use super::{Activation, LayerKind, Model, PreparedGraph, Task};
use crate::error::{Error, Result};
use crate::qmp::{
    dequantize_features, quantize_adjacency, quantize_features, quantized_aggregate, spmm_int,
    AggregateOutput, IntMatrix, QuantizedAggregation,
};
use crate::quant::QuantParams;
use crate::tensor::{ParamId, Tensor};

struct IntAct {
    q: IntMatrix,
    p: QuantParams,
}

impl IntAct {
    fn relu(mut self) -> Self {
        let z = self.p.zero_at(0);
        for v in &mut self.q.data {
            *v = (*v).max(z);
        }
        self
    }

    fn zero(&self) -> i64 {
        self.p.zero_at(0)
    }

    fn scale(&self) -> f64 {
        self.p.scale[0]
    }
}

fn params(model: &Model, comp: usize) -> Result<QuantParams> {
    let q = model.components[comp].fixed()?;
    if !q.calibrated {
        return Err(Error::state(format!(
            "component {} is not calibrated",
            model.components[comp].id
        )));
    }
    Ok(q.params(&model.store))
}

fn per_tensor(model: &Model, comp: usize) -> Result<QuantParams> {
    let p = params(model, comp)?;
    if p.slices() != 1 {
        return Err(Error::state(format!(
            "integer inference needs per-tensor parameters for {}",
            model.components[comp].id
        )));
    }
    Ok(p)
}

/// `sum_k (a_ik - za)(b_kj - zb)` with a setup-time overflow bound.
fn centered_matmul(a: &IntMatrix, za: i64, b: &IntMatrix, zb: i64) -> Result<IntMatrix> {
    if a.cols != b.rows {
        return Err(Error::dim(format!(
            "{}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let ma = a.data.iter().map(|v| (v - za).abs()).max().unwrap_or(0) as i128;
    let mb = b.data.iter().map(|v| (v - zb).abs()).max().unwrap_or(0) as i128;
    if a.cols as i128 * ma * mb > i64::MAX as i128 {
        return Err(Error::Overflow(format!(
            "{} terms of |{ma}| x |{mb}|",
            a.cols
        )));
    }
    let mut out = IntMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let dst = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let x = a.get(i, k) - za;
            if x == 0 {
                continue;
            }
            for (d, &w) in dst.iter_mut().zip(b.row(k)) {
                *d += x * (w - zb);
            }
        }
    }
    Ok(out)
}

fn requantize(
    rows: usize,
    cols: usize,
    p: &QuantParams,
    real: impl Fn(usize) -> f64,
) -> Result<IntMatrix> {
    IntMatrix::new(
        rows,
        cols,
        (0..rows * cols)
            .map(|t| p.quantize_one(real(t), 0))
            .collect(),
    )
}

struct Weight {
    q: IntMatrix,
    z: i64,
    s: f64,
}

fn weight(model: &Model, comp: usize, id: ParamId) -> Result<Weight> {
    let p = per_tensor(model, comp)?;
    Ok(Weight {
        q: quantize_features(model.store.value(id), &p)?,
        z: p.zero_at(0),
        s: p.scale[0],
    })
}

fn linear(
    model: &Model,
    h: &IntAct,
    w_comp: usize,
    w_id: ParamId,
    out_comp: usize,
) -> Result<IntAct> {
    let w = weight(model, w_comp, w_id)?;
    let acc = centered_matmul(&h.q, h.zero(), &w.q, w.z)?;
    let p = per_tensor(model, out_comp)?;
    let s = h.scale() * w.s;
    let q = requantize(acc.rows, acc.cols, &p, |t| acc.data[t] as f64 * s)?;
    Ok(IntAct { q, p })
}

fn aggregate(
    a: &crate::sparse::CsrMatrix<f64>,
    pa: QuantParams,
    h: IntAct,
    py: QuantParams,
) -> Result<IntAct> {
    let qa = quantize_adjacency(a, &pa)?;
    let agg = QuantizedAggregation::new(qa, h.q, pa, h.p, Some(py.clone()))?;
    match quantized_aggregate(&agg)? {
        AggregateOutput::Quantized(q) => Ok(IntAct { q, p: py }),
        AggregateOutput::Real(_) => unreachable!("output parameters were supplied"),
    }
}

fn max_pool(h: IntAct, assignment: &[usize], num_graphs: usize) -> Result<IntAct> {
    let f = h.q.cols;
    let mut best: Vec<Option<i64>> = vec![None; num_graphs * f];
    for (i, &g) in assignment.iter().enumerate() {
        for j in 0..f {
            let v = h.q.get(i, j);
            let slot = &mut best[g * f + j];
            if slot.is_none_or(|b| v > b) {
                *slot = Some(v);
            }
        }
    }
    let data = best
        .into_iter()
        .enumerate()
        .map(|(k, b)| b.ok_or_else(|| Error::invalid(format!("graph {} is empty", k / f))))
        .collect::<Result<Vec<_>>>()?;
    Ok(IntAct {
        q: IntMatrix::new(num_graphs, f, data)?,
        p: h.p,
    })
}

/// Logits computed from integer codes only (dequantized at the end).
pub fn forward_integer(model: &Model, graph: &PreparedGraph) -> Result<Tensor> {
    if !model.is_quantized() || model.is_relaxed() {
        return Err(Error::state(
            "integer mode needs a finalized fixed-precision model",
        ));
    }
    model.check_graph(graph)?;
    let pool_at = model.config.pool_before();
    let pool = |h: IntAct| -> Result<IntAct> {
        let b = graph
            .graphs
            .as_ref()
            .ok_or_else(|| Error::invalid("pooling needs graph membership"))?;
        max_pool(h, &b.assignment, b.num_graphs)
    };
    let first_input = model.layers[0].need("input");
    let p_in = per_tensor(model, first_input)?;
    let mut h = IntAct {
        q: quantize_features(&graph.features, &p_in)?,
        p: p_in,
    };
    for (l, (lc, lp)) in model.config.layers.iter().zip(&model.layers).enumerate() {
        if pool_at == Some(l) {
            h = pool(h)?;
        }
        h = match lp.kind {
            LayerKind::Gcn => {
                let t = linear(
                    model,
                    &h,
                    lp.need("weight"),
                    lp.weights[0],
                    lp.need("linear_out"),
                )?;
                let pa = params(model, lp.need("adjacency"))?;
                aggregate(&graph.gcn, pa, t, per_tensor(model, lp.need("aggregate"))?)?
            }
            LayerKind::Gin => {
                if !graph.raw_is_binary {
                    return Err(Error::invalid("gin layers need an unweighted adjacency"));
                }
                let centered = IntMatrix::new(
                    h.q.rows,
                    h.q.cols,
                    h.q.data.iter().map(|v| v - h.zero()).collect(),
                )?;
                let ones = graph.raw.map_values(|_| 1i64);
                let neigh = spmm_int(&ones, &centered)?;
                let eps = model.store.value(lp.epsilon.expect("gin epsilon")).item();
                let p = per_tensor(model, lp.need("aggregate"))?;
                let s = h.scale();
                let q = requantize(centered.rows, centered.cols, &p, |t| {
                    s * ((1.0 + eps) * centered.data[t] as f64 + neigh.data[t] as f64)
                })?;
                let agg = IntAct { q, p };
                let mid = linear(
                    model,
                    &agg,
                    lp.need("w1"),
                    lp.weights[0],
                    lp.need("mlp_hidden"),
                )?
                .relu();
                linear(model, &mid, lp.need("w2"), lp.weights[1], lp.need("out"))?
            }
            LayerKind::Sage => {
                let pa = params(model, lp.need("adjacency"))?;
                let h_copy = IntAct {
                    q: h.q.clone(),
                    p: h.p.clone(),
                };
                let agg = aggregate(
                    &graph.mean,
                    pa,
                    h_copy,
                    per_tensor(model, lp.need("aggregate"))?,
                )?;
                let wr = weight(model, lp.need("w_root"), lp.weights[0])?;
                let wn = weight(model, lp.need("w_neigh"), lp.weights[1])?;
                let acc_r = centered_matmul(&h.q, h.zero(), &wr.q, wr.z)?;
                let acc_n = centered_matmul(&agg.q, agg.zero(), &wn.q, wn.z)?;
                let (sr, sn) = (h.scale() * wr.s, agg.scale() * wn.s);
                let p = per_tensor(model, lp.need("out"))?;
                let q = requantize(acc_r.rows, acc_r.cols, &p, |t| {
                    acc_r.data[t] as f64 * sr + acc_n.data[t] as f64 * sn
                })?;
                IntAct { q, p }
            }
            LayerKind::Linear => {
                linear(model, &h, lp.need("weight"), lp.weights[0], lp.need("out"))?
            }
        };
        if lc.activation == Activation::Relu {
            h = h.relu();
        }
    }
    if pool_at == Some(model.config.layers.len()) {
        h = pool(h)?;
    }
    debug_assert!(model.config.task == Task::GraphClassification || graph.graphs.is_none());
    dequantize_features(&h.q, &h.p)
}

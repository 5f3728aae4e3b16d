use std::cell::RefCell;

use super::{Activation, LayerKind, Mode, Model, PreparedGraph, SlotQuant};
use crate::error::{Error, Result};
use crate::quant::SliceLayout;
use crate::relaxed::PenaltyAccumulator;
use crate::tensor::{Tape, Tensor, Var};

type Captured = Vec<Option<(Vec<f64>, SliceLayout)>>;

struct Ctx<'m, 't> {
    model: &'m Model,
    graph: &'m PreparedGraph,
    tape: &'t Tape,
    mode: Mode,
    penalty: RefCell<Option<PenaltyAccumulator<'t>>>,
    capture: Option<RefCell<Captured>>,
}

impl<'t> Ctx<'_, 't> {
    fn q(&self, comp: usize, x: Var<'t>) -> Result<Var<'t>> {
        let layout = self.model.layout_for(comp, &x.shape(), self.graph);
        if let Some(cap) = &self.capture {
            cap.borrow_mut()[comp] = Some((x.value().data().to_vec(), layout.clone()));
        }
        let store = &self.model.store;
        match (self.mode, &self.model.components[comp].quant) {
            (Mode::Fp, _) | (_, SlotQuant::None) => Ok(x),
            (Mode::FakeQuant, SlotQuant::Fixed(q)) => q.forward(self.tape, store, x, &layout),
            (Mode::Relaxed, SlotQuant::Relaxed(r)) => {
                let (y, probs) = r.forward(self.tape, store, x, &layout)?;
                if let Some(acc) = self.penalty.borrow_mut().as_mut() {
                    acc.record(comp, x.value().numel(), probs, &r.bits)?;
                }
                Ok(y)
            }
            (mode, _) => Err(Error::state(format!(
                "component {} cannot run in {mode:?} mode",
                self.model.components[comp].id
            ))),
        }
    }

    fn param(&self, id: crate::tensor::ParamId) -> Var<'t> {
        self.tape.param(&self.model.store, id)
    }
}

fn run<'t>(ctx: &Ctx<'_, 't>) -> Result<Var<'t>> {
    let (m, g, tape) = (ctx.model, ctx.graph, ctx.tape);
    m.check_graph(g)?;
    let pool_at = m.config.pool_before();
    let pool = |h: Var<'t>| -> Result<Var<'t>> {
        let b = g
            .graphs
            .as_ref()
            .ok_or_else(|| Error::invalid("pooling needs graph membership"))?;
        h.group_max(&b.assignment, b.num_graphs)
    };
    let mut h = tape.constant(g.features.clone());
    for (l, (lc, lp)) in m.config.layers.iter().zip(&m.layers).enumerate() {
        if pool_at == Some(l) {
            h = pool(h)?;
        }
        if let Some(s) = lp.slot("input") {
            h = ctx.q(s, h)?;
        }
        h = match lp.kind {
            LayerKind::Gcn => {
                let w = ctx.q(lp.need("weight"), ctx.param(lp.weights[0]))?;
                let t = ctx.q(lp.need("linear_out"), h.matmul(w)?)?;
                let av = tape.constant(Tensor::vector(g.gcn.values().to_vec()));
                let fa = ctx.q(lp.need("adjacency"), av)?;
                ctx.q(lp.need("aggregate"), fa.spmm(&g.gcn, t)?)?
            }
            LayerKind::Gin => {
                if !g.raw_is_binary {
                    return Err(Error::invalid("gin layers need an unweighted adjacency"));
                }
                let ones = tape.constant(g.raw_ones.clone());
                let neigh = ones.spmm(&g.raw, h)?;
                let eps = ctx.param(lp.epsilon.expect("gin epsilon"));
                let agg = ctx.q(
                    lp.need("aggregate"),
                    eps.add_scalar(1.0).mul(h)?.add(neigh)?,
                )?;
                let w1 = ctx.q(lp.need("w1"), ctx.param(lp.weights[0]))?;
                let mid = ctx.q(lp.need("mlp_hidden"), agg.matmul(w1)?)?.relu();
                let w2 = ctx.q(lp.need("w2"), ctx.param(lp.weights[1]))?;
                ctx.q(lp.need("out"), mid.matmul(w2)?)?
            }
            LayerKind::Sage => {
                let av = tape.constant(Tensor::vector(g.mean.values().to_vec()));
                let fa = ctx.q(lp.need("adjacency"), av)?;
                let agg = ctx.q(lp.need("aggregate"), fa.spmm(&g.mean, h)?)?;
                let wr = ctx.q(lp.need("w_root"), ctx.param(lp.weights[0]))?;
                let wn = ctx.q(lp.need("w_neigh"), ctx.param(lp.weights[1]))?;
                ctx.q(lp.need("out"), h.matmul(wr)?.add(agg.matmul(wn)?)?)?
            }
            LayerKind::Linear => {
                let w = ctx.q(lp.need("weight"), ctx.param(lp.weights[0]))?;
                ctx.q(lp.need("out"), h.matmul(w)?)?
            }
        };
        if lc.activation == Activation::Relu {
            h = h.relu();
        }
    }
    if pool_at == Some(m.config.layers.len()) {
        h = pool(h)?;
    }
    Ok(h)
}

fn check_mode(model: &Model, mode: Mode) -> Result<()> {
    match mode {
        Mode::Fp => Ok(()),
        Mode::Integer => Err(Error::state("integer mode has no differentiable forward")),
        Mode::FakeQuant if !model.is_quantized() || model.is_relaxed() => Err(Error::state(
            "fake_quant mode needs a fixed-precision quantized model",
        )),
        Mode::Relaxed if !model.is_relaxed() => {
            Err(Error::state("relaxed mode needs a relaxed model"))
        }
        _ if !model.is_calibrated() => Err(Error::state(
            "model must be calibrated before quantized forward",
        )),
        _ => Ok(()),
    }
}

/// Differentiable forward returning logits (per node, or per graph
/// after pooling).
pub fn forward<'t>(
    model: &Model,
    tape: &'t Tape,
    graph: &PreparedGraph,
    mode: Mode,
) -> Result<Var<'t>> {
    check_mode(model, mode)?;
    run(&Ctx {
        model,
        graph,
        tape,
        mode,
        penalty: RefCell::new(None),
        capture: None,
    })
}

/// Relaxed forward that also records every relaxed tensor for the penalty.
pub fn forward_with_penalty<'t>(
    model: &Model,
    tape: &'t Tape,
    graph: &PreparedGraph,
) -> Result<(Var<'t>, PenaltyAccumulator<'t>)> {
    check_mode(model, Mode::Relaxed)?;
    let ctx = Ctx {
        model,
        graph,
        tape,
        mode: Mode::Relaxed,
        penalty: RefCell::new(Some(PenaltyAccumulator::new())),
        capture: None,
    };
    let out = run(&ctx)?;
    let acc = ctx.penalty.into_inner().expect("accumulator");
    Ok((out, acc))
}

/// Values reaching each component in a full-precision pass.
pub(super) fn capture(model: &Model, graph: &PreparedGraph) -> Result<Captured> {
    let tape = Tape::new();
    let ctx = Ctx {
        model,
        graph,
        tape: &tape,
        mode: Mode::Fp,
        penalty: RefCell::new(None),
        capture: Some(RefCell::new(vec![None; model.components.len()])),
    };
    run(&ctx)?;
    Ok(ctx.capture.expect("capture").into_inner())
}

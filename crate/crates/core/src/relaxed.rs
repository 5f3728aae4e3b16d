//! Softmax relaxation over bit-width choices and the memory penalty.
//!
//! Each relaxed quantizer mixes fixed-bit children with weights
//! `softmax(alpha)`. The penalty of one tensor `T` is the expected
//! bit-width times its element count, normalized by `1024 * 8`:
//! `C(T) = |T| / 8192 * sum_i b_i softmax(alpha)_i`, with gradient
//! `dC/d alpha_i = |T| / 8192 * p_i (b_i - sum_j b_j p_j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::{QuantizerSpec, QuantizerState, SliceLayout};
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};

/// Bits-to-kibibytes factor applied to the penalty.
pub const PENALTY_NORMALIZER: f64 = 1024.0 * 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Input,
    Weight,
    Aggregation,
    Output,
}

/// Sorted, distinct, each in `1..=32`.
pub fn validate_bit_choices(bits: &[u32]) -> Result<()> {
    if bits.is_empty() {
        return Err(Error::config("bit choices must not be empty"));
    }
    if bits.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(format!(
            "bit choices {bits:?} must be sorted and distinct"
        )));
    }
    if let Some(b) = bits.iter().find(|&&b| !(1..=32).contains(&b)) {
        return Err(Error::config(format!("bit choice {b} outside 1..=32")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelaxedQuantizer {
    pub bits: Vec<u32>,
    pub alpha: ParamId,
    pub children: Vec<QuantizerState>,
}

impl RelaxedQuantizer {
    /// One child per bit choice, all sharing `template` apart from bits.
    /// Children are named `{prefix}.b{bits}`; alpha is `{prefix}.alpha`.
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        bits: &[u32],
        template: QuantizerSpec,
        slices: usize,
    ) -> Result<Self> {
        validate_bit_choices(bits)?;
        let children = bits
            .iter()
            .map(|&b| {
                QuantizerState::new(
                    store,
                    &format!("{prefix}.b{b}"),
                    QuantizerSpec {
                        bits: b,
                        ..template
                    },
                    slices,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let alpha = store.add(format!("{prefix}.alpha"), Tensor::zeros(&[bits.len()]));
        Ok(RelaxedQuantizer {
            bits: bits.to_vec(),
            alpha,
            children,
        })
    }

    pub fn calibrate_minmax(
        &mut self,
        store: &mut ParamStore,
        x: &[f64],
        layout: &SliceLayout,
    ) -> Result<()> {
        for c in &mut self.children {
            c.calibrate_minmax(store, x, layout)?;
        }
        Ok(())
    }

    pub fn probabilities(&self, store: &ParamStore) -> Vec<f64> {
        softmax(store.value(self.alpha).data())
    }

    /// Bit-width with the largest alpha; ties go to the lowest bit-width.
    pub fn select(&self, store: &ParamStore) -> u32 {
        self.bits[argmax_lowest(store.value(self.alpha).data())]
    }

    /// `sum_i softmax(alpha)_i * fq_{b_i}(x)`. Returns the output and the
    /// mixture weights (for the penalty).
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        x: Var<'t>,
        layout: &SliceLayout,
    ) -> Result<(Var<'t>, Var<'t>)> {
        let probs = tape.param(store, self.alpha).softmax();
        let mut out: Option<Var<'t>> = None;
        for (i, child) in self.children.iter().enumerate() {
            let term = probs
                .index(i)?
                .mul(child.forward(tape, store, x, layout)?)?;
            out = Some(match out {
                None => term,
                Some(acc) => acc.add(term)?,
            });
        }
        Ok((out.expect("at least one child"), probs))
    }
}

pub fn softmax(alpha: &[f64]) -> Vec<f64> {
    let m = alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = alpha.iter().map(|a| (a - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Index of the maximum; the first (lowest bit-width) wins ties.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `C(T)` for one tensor, evaluated directly.
pub fn penalty_value(alpha: &[f64], bits: &[u32], count: usize) -> f64 {
    let p = softmax(alpha);
    let expected: f64 = p.iter().zip(bits).map(|(p, &b)| p * b as f64).sum();
    expected * count as f64 / PENALTY_NORMALIZER
}

/// Closed-form `dC(T)/d alpha`.
pub fn penalty_gradient(alpha: &[f64], bits: &[u32], count: usize) -> Vec<f64> {
    let p = softmax(alpha);
    let mean: f64 = p.iter().zip(bits).map(|(p, &b)| p * b as f64).sum();
    let k = count as f64 / PENALTY_NORMALIZER;
    p.iter()
        .zip(bits)
        .map(|(p, &b)| k * p * (b as f64 - mean))
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct PenaltyEntry<'t> {
    pub component: usize,
    pub count: usize,
    pub probs: Var<'t>,
}

/// Tensors seen by relaxed quantizers during one forward pass.
#[derive(Debug, Default)]
pub struct PenaltyAccumulator<'t> {
    entries: Vec<PenaltyEntry<'t>>,
    bits: Vec<Vec<u32>>,
}

impl<'t> PenaltyAccumulator<'t> {
    pub fn new() -> Self {
        PenaltyAccumulator {
            entries: Vec::new(),
            bits: Vec::new(),
        }
    }

    pub fn record(
        &mut self,
        component: usize,
        count: usize,
        probs: Var<'t>,
        bits: &[u32],
    ) -> Result<()> {
        if self.entries.iter().any(|e| e.component == component) {
            return Err(Error::state(format!(
                "component {component} recorded twice in one pass"
            )));
        }
        self.entries.push(PenaltyEntry {
            component,
            count,
            probs,
        });
        self.bits.push(bits.to_vec());
        Ok(())
    }

    pub fn entries(&self) -> &[PenaltyEntry<'t>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Differentiable penalty summed over entries.
    pub fn cost(&self, tape: &'t Tape) -> Result<Var<'t>> {
        if self.entries.is_empty() {
            return Err(Error::state("penalty accumulator is empty"));
        }
        let mut total: Option<Var<'t>> = None;
        for (e, bits) in self.entries.iter().zip(&self.bits) {
            let b = tape.constant(Tensor::vector(bits.iter().map(|&b| b as f64).collect()));
            let c = e
                .probs
                .mul(b)?
                .sum()
                .scale(e.count as f64 / PENALTY_NORMALIZER);
            total = Some(match total {
                None => c,
                Some(t) => t.add(c)?,
            });
        }
        Ok(total.expect("non-empty"))
    }

    /// Expected bit-width weighted by element count.
    pub fn expected_bits(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (e, bits) in self.entries.iter().zip(&self.bits) {
            let p = e.probs.value();
            let mean: f64 = p.data().iter().zip(bits).map(|(p, &b)| p * b as f64).sum();
            num += mean * e.count as f64;
            den += e.count as f64;
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }
}

/// `task + lambda * penalty`.
pub fn total_loss<'t>(task: Var<'t>, penalty: Var<'t>, lambda: f64) -> Result<Var<'t>> {
    task.add(penalty.scale(lambda))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentEntry {
    pub component_id: String,
    pub role: Role,
    pub bits: u32,
}

/// Chosen bit-width per component, in architecture order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BitWidthAssignment {
    pub entries: Vec<AssignmentEntry>,
}

impl BitWidthAssignment {
    pub fn get(&self, component_id: &str) -> Option<u32> {
        self.entries
            .iter()
            .find(|e| e.component_id == component_id)
            .map(|e| e.bits)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Unweighted mean over components.
    pub fn mean_bits(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        self.entries.iter().map(|e| e.bits as f64).sum::<f64>() / self.entries.len() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

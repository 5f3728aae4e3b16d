//! Quantizable GCN / GIN / GraphSAGE / linear stacks.
//!
//! Every quantization point of a model is a *component* with a stable id
//! (`l{layer}.{name}`). Under the fixed scheme each component owns one
//! quantizer, under the relaxed scheme a softmax mixture over bit choices.

mod checkpoint;
mod config;
mod forward;
mod integer;
mod prepared;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use config::{Activation, LayerConfig, LayerKind, ModelConfig, Pooling, Task};
pub use prepared::PreparedGraph;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::{Granularity, QuantizerSpec, QuantizerState, SliceLayout};
use crate::relaxed::{
    validate_bit_choices, AssignmentEntry, BitWidthAssignment, RelaxedQuantizer, Role,
};
use crate::tensor::{ParamId, ParamStore, Tensor};

/// What a component quantizes; fixes its quantizer template.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Input,
    Weight,
    LinearOut,
    MlpHidden,
    Adjacency,
    Aggregation,
}

impl ComponentKind {
    pub fn role(self) -> Role {
        match self {
            ComponentKind::Input | ComponentKind::Adjacency => Role::Input,
            ComponentKind::Weight => Role::Weight,
            ComponentKind::LinearOut | ComponentKind::MlpHidden => Role::Output,
            ComponentKind::Aggregation => Role::Aggregation,
        }
    }

    pub fn template(self, bits: u32) -> QuantizerSpec {
        match self {
            ComponentKind::Weight => QuantizerSpec::new(bits, true).symmetric(),
            ComponentKind::Adjacency => {
                QuantizerSpec::new(bits, false).with_granularity(Granularity::PerRow)
            }
            _ => QuantizerSpec::new(bits, true),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SlotQuant {
    None,
    Fixed(QuantizerState),
    Relaxed(RelaxedQuantizer),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub id: String,
    pub kind: ComponentKind,
    pub layer: usize,
    pub quant: SlotQuant,
}

impl Component {
    pub fn fixed(&self) -> Result<&QuantizerState> {
        match &self.quant {
            SlotQuant::Fixed(q) => Ok(q),
            _ => Err(Error::state(format!(
                "component {} has no fixed quantizer",
                self.id
            ))),
        }
    }
}

/// How components are quantized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Scheme {
    FullPrecision,
    /// Every component at `bits`.
    Uniform {
        bits: u32,
    },
    Fixed {
        assignment: BitWidthAssignment,
    },
    Relaxed {
        bits: Vec<u32>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Fp,
    FakeQuant,
    Relaxed,
    Integer,
}

/// Weights and component indices of one layer.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct LayerParams {
    pub kind: LayerKind,
    pub weights: Vec<ParamId>,
    pub epsilon: Option<ParamId>,
    pub slots: Vec<(&'static str, usize)>,
}

impl LayerParams {
    pub fn slot(&self, name: &str) -> Option<usize> {
        self.slots.iter().find(|(n, _)| *n == name).map(|&(_, i)| i)
    }

    pub fn need(&self, name: &str) -> usize {
        self.slot(name).expect("slot present for this layer kind")
    }
}

/// Component names of one layer, in enumeration order.
fn layer_components(kind: LayerKind, first: bool) -> Vec<(&'static str, ComponentKind)> {
    let mut v = Vec::new();
    if first {
        v.push(("input", ComponentKind::Input));
    }
    match kind {
        LayerKind::Gcn => v.extend([
            ("weight", ComponentKind::Weight),
            ("linear_out", ComponentKind::LinearOut),
            ("adjacency", ComponentKind::Adjacency),
            ("aggregate", ComponentKind::Aggregation),
        ]),
        LayerKind::Gin => v.extend([
            ("aggregate", ComponentKind::Aggregation),
            ("w1", ComponentKind::Weight),
            ("mlp_hidden", ComponentKind::MlpHidden),
            ("w2", ComponentKind::Weight),
            ("out", ComponentKind::LinearOut),
        ]),
        LayerKind::Sage => v.extend([
            ("adjacency", ComponentKind::Adjacency),
            ("aggregate", ComponentKind::Aggregation),
            ("w_root", ComponentKind::Weight),
            ("w_neigh", ComponentKind::Weight),
            ("out", ComponentKind::LinearOut),
        ]),
        LayerKind::Linear => v.extend([
            ("weight", ComponentKind::Weight),
            ("out", ComponentKind::LinearOut),
        ]),
    }
    v
}

/// `(id, kind)` of every component of `config`, in order.
pub fn enumerate_components(config: &ModelConfig) -> Vec<(String, ComponentKind)> {
    config
        .layers
        .iter()
        .enumerate()
        .flat_map(|(l, layer)| {
            layer_components(layer.kind, l == 0)
                .into_iter()
                .map(move |(name, kind)| (format!("l{l}.{name}"), kind))
        })
        .collect()
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("weight shape")
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub scheme: Scheme,
    /// Node count the per-row adjacency quantizers were sized for.
    pub nodes: usize,
    pub store: ParamStore,
    pub components: Vec<Component>,
    pub(crate) layers: Vec<LayerParams>,
}

impl Model {
    pub fn build(config: &ModelConfig, scheme: Scheme, nodes: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if nodes == 0 {
            return Err(Error::invalid("model needs at least one node"));
        }
        match &scheme {
            Scheme::Relaxed { bits } => validate_bit_choices(bits)?,
            Scheme::Uniform { bits } => validate_bit_choices(&[*bits])?,
            _ => {}
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut components = Vec::new();
        let mut layers = Vec::new();
        for (l, lc) in config.layers.iter().enumerate() {
            let (weights, epsilon) = match lc.kind {
                LayerKind::Gcn | LayerKind::Linear => (
                    vec![store.add(
                        format!("l{l}.weight"),
                        glorot(&mut rng, lc.in_dim, lc.out_dim),
                    )],
                    None,
                ),
                LayerKind::Gin => {
                    let h = lc.gin_hidden();
                    let w1 = store.add(format!("l{l}.w1"), glorot(&mut rng, lc.in_dim, h));
                    let w2 = store.add(format!("l{l}.w2"), glorot(&mut rng, h, lc.out_dim));
                    let eps = if lc.gin_epsilon_learnable {
                        store.add(format!("l{l}.epsilon"), Tensor::scalar(0.0))
                    } else {
                        store.add_frozen(format!("l{l}.epsilon"), Tensor::scalar(0.0))
                    };
                    (vec![w1, w2], Some(eps))
                }
                LayerKind::Sage => {
                    let wr = store.add(
                        format!("l{l}.w_root"),
                        glorot(&mut rng, lc.in_dim, lc.out_dim),
                    );
                    let wn = store.add(
                        format!("l{l}.w_neigh"),
                        glorot(&mut rng, lc.in_dim, lc.out_dim),
                    );
                    (vec![wr, wn], None)
                }
            };
            let mut slots = Vec::new();
            for (name, kind) in layer_components(lc.kind, l == 0) {
                let id = format!("l{l}.{name}");
                let slices = if kind == ComponentKind::Adjacency {
                    nodes
                } else {
                    1
                };
                let quant = match &scheme {
                    Scheme::FullPrecision => SlotQuant::None,
                    Scheme::Uniform { bits } => SlotQuant::Fixed(QuantizerState::new(
                        &mut store,
                        &format!("{id}.b{bits}"),
                        kind.template(*bits),
                        slices,
                    )?),
                    Scheme::Fixed { assignment } => {
                        let bits = assignment.get(&id).ok_or_else(|| {
                            Error::config(format!("assignment has no entry for {id}"))
                        })?;
                        SlotQuant::Fixed(QuantizerState::new(
                            &mut store,
                            &format!("{id}.b{bits}"),
                            kind.template(bits),
                            slices,
                        )?)
                    }
                    Scheme::Relaxed { bits } => SlotQuant::Relaxed(RelaxedQuantizer::new(
                        &mut store,
                        &id,
                        bits,
                        kind.template(bits[0]),
                        slices,
                    )?),
                };
                slots.push((name, components.len()));
                components.push(Component {
                    id,
                    kind,
                    layer: l,
                    quant,
                });
            }
            layers.push(LayerParams {
                kind: lc.kind,
                weights,
                epsilon,
                slots,
            });
        }
        if let Scheme::Fixed { assignment } = &scheme {
            if let Some(extra) = assignment
                .entries
                .iter()
                .find(|e| !components.iter().any(|c| c.id == e.component_id))
            {
                return Err(Error::config(format!(
                    "assignment names unknown component {}",
                    extra.component_id
                )));
            }
        }
        Ok(Model {
            config: config.clone(),
            scheme,
            nodes,
            store,
            components,
            layers,
        })
    }

    pub fn is_relaxed(&self) -> bool {
        matches!(self.scheme, Scheme::Relaxed { .. })
    }

    pub fn is_quantized(&self) -> bool {
        !matches!(self.scheme, Scheme::FullPrecision)
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn relaxed_quantizers(&self) -> impl Iterator<Item = (&Component, &RelaxedQuantizer)> {
        self.components.iter().filter_map(|c| match &c.quant {
            SlotQuant::Relaxed(r) => Some((c, r)),
            _ => None,
        })
    }

    pub fn alpha_params(&self) -> Vec<ParamId> {
        self.relaxed_quantizers().map(|(_, r)| r.alpha).collect()
    }

    pub fn is_calibrated(&self) -> bool {
        self.components.iter().all(|c| match &c.quant {
            SlotQuant::None => true,
            SlotQuant::Fixed(q) => q.calibrated,
            SlotQuant::Relaxed(r) => r.children.iter().all(|q| q.calibrated),
        })
    }

    /// Operating bit-width of component `idx` (32 when unquantized).
    pub fn component_bits(&self, idx: usize) -> Result<u32> {
        match &self.components[idx].quant {
            SlotQuant::None => Ok(32),
            SlotQuant::Fixed(q) => Ok(q.spec.bits),
            SlotQuant::Relaxed(_) => Err(Error::state(format!(
                "component {} is still relaxed",
                self.components[idx].id
            ))),
        }
    }

    /// Current bit-widths of a fixed or full-precision model.
    pub fn assignment(&self) -> Result<BitWidthAssignment> {
        let entries = (0..self.components.len())
            .map(|i| {
                Ok(AssignmentEntry {
                    component_id: self.components[i].id.clone(),
                    role: self.components[i].kind.role(),
                    bits: self.component_bits(i)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BitWidthAssignment { entries })
    }

    /// Argmax-alpha selection of a relaxed model.
    pub fn selected_assignment(&self) -> Result<BitWidthAssignment> {
        if !self.is_relaxed() {
            return Err(Error::state("selection needs a relaxed model"));
        }
        let entries = self
            .relaxed_quantizers()
            .map(|(c, r)| AssignmentEntry {
                component_id: c.id.clone(),
                role: c.kind.role(),
                bits: r.select(&self.store),
            })
            .collect();
        Ok(BitWidthAssignment { entries })
    }

    /// Fixed-precision model using the chosen children of this relaxed
    /// model; weights and the chosen children's `S`, `Z` carry over.
    pub fn finalize(&self, assignment: &BitWidthAssignment) -> Result<Model> {
        if !self.is_relaxed() {
            return Err(Error::state("finalize needs a relaxed model"));
        }
        let mut out = Model::build(
            &self.config,
            Scheme::Fixed {
                assignment: assignment.clone(),
            },
            self.nodes,
            0,
        )?;
        out.copy_params_from(self);
        for (dst, src) in out.components.iter_mut().zip(&self.components) {
            if let (SlotQuant::Fixed(q), SlotQuant::Relaxed(r)) = (&mut dst.quant, &src.quant) {
                let k = r
                    .bits
                    .iter()
                    .position(|&b| b == q.spec.bits)
                    .expect("bits from the choice set");
                q.calibrated = r.children[k].calibrated;
            }
        }
        Ok(out)
    }

    /// Copies every parameter whose name also exists in `other`.
    pub fn copy_params_from(&mut self, other: &Model) {
        let ids: Vec<ParamId> = self.store.ids().collect();
        for id in ids {
            let name = self.store.get(id).name.clone();
            if let Some(src) = other.store.find(&name) {
                let v = other.store.value(src).clone();
                if v.shape() == self.store.value(id).shape() {
                    self.store.set_value(id, v);
                }
            }
        }
    }

    /// Min-max calibration of every quantizer on the activations of a
    /// full-precision forward pass.
    pub fn calibrate(&mut self, graph: &PreparedGraph) -> Result<()> {
        let captured = forward::capture(self, graph)?;
        for (comp, cap) in self.components.iter_mut().zip(captured) {
            let Some((values, layout)) = cap else {
                continue;
            };
            match &mut comp.quant {
                SlotQuant::None => {}
                SlotQuant::Fixed(q) => q.calibrate_minmax(&mut self.store, &values, &layout)?,
                SlotQuant::Relaxed(r) => r.calibrate_minmax(&mut self.store, &values, &layout)?,
            }
        }
        Ok(())
    }

    pub(crate) fn layout_for(
        &self,
        comp: usize,
        shape: &[usize],
        graph: &PreparedGraph,
    ) -> SliceLayout {
        let c = &self.components[comp];
        if c.kind == ComponentKind::Adjacency {
            match self.layers[c.layer].kind {
                LayerKind::Sage => graph.mean_rows.clone(),
                _ => graph.gcn_rows.clone(),
            }
        } else {
            SliceLayout::dense(Granularity::PerTensor, shape)
        }
    }

    pub fn check_graph(&self, graph: &PreparedGraph) -> Result<()> {
        if graph.num_nodes() != self.nodes {
            return Err(Error::dim(format!(
                "model was built for {} nodes, graph has {}",
                self.nodes,
                graph.num_nodes()
            )));
        }
        if graph.features.cols() != self.config.in_dim() {
            return Err(Error::dim(format!(
                "model expects {} features, graph has {}",
                self.config.in_dim(),
                graph.features.cols()
            )));
        }
        let pooled = self.config.task == Task::GraphClassification;
        if pooled != graph.graphs.is_some() {
            return Err(Error::config(
                "model task does not match the dataset (node vs graph)",
            ));
        }
        Ok(())
    }
}

pub use forward::{forward, forward_with_penalty};
pub use integer::forward_integer;

/// Logits of `model` on `graph` in `mode`; `Relaxed` mode discards the
/// penalty.
pub fn model_forward(model: &Model, graph: &PreparedGraph, mode: Mode) -> Result<Tensor> {
    match mode {
        Mode::Integer => forward_integer(model, graph),
        _ => {
            let tape = crate::tensor::Tape::new();
            let out = forward(model, &tape, graph, mode)?;
            Ok((*out.value()).clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_counts() {
        assert_eq!(enumerate_components(&ModelConfig::gcn(4, 8, 2, 2)).len(), 9);
        assert_eq!(enumerate_components(&ModelConfig::gcn(4, 8, 2, 1)).len(), 5);
        let ids: Vec<String> = enumerate_components(&ModelConfig::gcn(4, 8, 2, 1))
            .into_iter()
            .map(|c| c.0)
            .collect();
        assert_eq!(
            ids,
            [
                "l0.input",
                "l0.weight",
                "l0.linear_out",
                "l0.adjacency",
                "l0.aggregate"
            ]
        );
    }

    #[test]
    fn relaxed_build_registers_children() {
        let m = Model::build(
            &ModelConfig::gcn(4, 8, 2, 2),
            Scheme::Relaxed {
                bits: vec![2, 4, 8],
            },
            10,
            0,
        )
        .unwrap();
        assert_eq!(m.relaxed_quantizers().count(), 9);
        assert!(m.store.find("l0.adjacency.b8.log_scale").is_some());
        assert_eq!(
            m.store
                .value(m.store.find("l1.adjacency.b2.log_scale").unwrap())
                .numel(),
            10
        );
    }

    #[test]
    fn fixed_build_requires_full_assignment() {
        let mut a = Model::build(
            &ModelConfig::gcn(4, 8, 2, 1),
            Scheme::Uniform { bits: 4 },
            3,
            0,
        )
        .unwrap()
        .assignment()
        .unwrap();
        a.entries.pop();
        let r = Model::build(
            &ModelConfig::gcn(4, 8, 2, 1),
            Scheme::Fixed { assignment: a },
            3,
            0,
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn relaxed_bits_reported_as_state_error() {
        let m = Model::build(
            &ModelConfig::gcn(4, 8, 2, 1),
            Scheme::Relaxed { bits: vec![2, 4] },
            3,
            0,
        )
        .unwrap();
        assert!(matches!(m.component_bits(0), Err(Error::State(_))));
        assert!(matches!(m.assignment(), Err(Error::State(_))));
    }
}

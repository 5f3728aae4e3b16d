use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Gcn,
    Gin,
    Sage,
    Linear,
}

impl LayerKind {
    pub fn is_message_passing(self) -> bool {
        !matches!(self, LayerKind::Linear)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    #[default]
    None,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    #[serde(default)]
    pub activation: Activation,
    /// Hidden width of the two-layer GIN MLP (defaults to `out_dim`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gin_mlp_dims: Option<Vec<usize>>,
    #[serde(default)]
    pub gin_epsilon_learnable: bool,
}

impl LayerConfig {
    pub fn new(kind: LayerKind, in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        LayerConfig {
            kind,
            in_dim,
            out_dim,
            activation,
            gin_mlp_dims: None,
            gin_epsilon_learnable: false,
        }
    }

    pub fn gin_hidden(&self) -> usize {
        self.gin_mlp_dims
            .as_ref()
            .and_then(|d| d.first().copied())
            .unwrap_or(self.out_dim)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    NodeClassification,
    GraphClassification,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    GlobalMax,
    None,
}

/// Layer stack. For graph tasks, node embeddings are max-pooled right
/// after the last message-passing layer; any later layers must be linear.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: Vec<LayerConfig>,
    pub task: Task,
    pub pooling: Pooling,
}

impl ModelConfig {
    /// GCN stack `in -> hidden -> ... -> classes` with relu between layers.
    pub fn gcn(in_dim: usize, hidden: usize, classes: usize, depth: usize) -> Self {
        Self::stack(LayerKind::Gcn, in_dim, hidden, classes, depth)
    }

    pub fn sage(in_dim: usize, hidden: usize, classes: usize, depth: usize) -> Self {
        Self::stack(LayerKind::Sage, in_dim, hidden, classes, depth)
    }

    fn stack(kind: LayerKind, in_dim: usize, hidden: usize, classes: usize, depth: usize) -> Self {
        let depth = depth.max(1);
        let layers = (0..depth)
            .map(|l| {
                let i = if l == 0 { in_dim } else { hidden };
                if l + 1 == depth {
                    LayerConfig::new(kind, i, classes, Activation::None)
                } else {
                    LayerConfig::new(kind, i, hidden, Activation::Relu)
                }
            })
            .collect();
        ModelConfig {
            layers,
            task: Task::NodeClassification,
            pooling: Pooling::None,
        }
    }

    /// Graph classifier: GIN layers, global max pooling, linear head.
    pub fn gin_graph(in_dim: usize, hidden: usize, classes: usize, depth: usize) -> Self {
        let mut layers: Vec<LayerConfig> = (0..depth.max(1))
            .map(|l| {
                let mut c = LayerConfig::new(
                    LayerKind::Gin,
                    if l == 0 { in_dim } else { hidden },
                    hidden,
                    Activation::Relu,
                );
                c.gin_epsilon_learnable = true;
                c
            })
            .collect();
        layers.push(LayerConfig::new(
            LayerKind::Linear,
            hidden,
            classes,
            Activation::None,
        ));
        ModelConfig {
            layers,
            task: Task::GraphClassification,
            pooling: Pooling::GlobalMax,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    /// Index of the layer that receives pooled input (`layers.len()` when
    /// pooling happens after the last layer).
    pub fn pool_before(&self) -> Option<usize> {
        if self.pooling != Pooling::GlobalMax {
            return None;
        }
        let last_mp = self
            .layers
            .iter()
            .rposition(|l| l.kind.is_message_passing())?;
        Some(last_mp + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::config("model needs at least one layer"));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.in_dim == 0 || layer.out_dim == 0 {
                return Err(Error::config(format!("layer {l} has a zero dimension")));
            }
            if let Some(d) = &layer.gin_mlp_dims {
                if layer.kind != LayerKind::Gin || d.len() != 1 || d[0] == 0 {
                    return Err(Error::config(format!(
                        "layer {l}: gin_mlp_dims must hold one positive width on a gin layer"
                    )));
                }
            }
            if l > 0 && self.layers[l - 1].out_dim != layer.in_dim {
                return Err(Error::config(format!(
                    "layer {l} expects {} inputs but layer {} emits {}",
                    layer.in_dim,
                    l - 1,
                    self.layers[l - 1].out_dim
                )));
            }
        }
        match (self.task, self.pooling) {
            (Task::GraphClassification, Pooling::GlobalMax) => {
                if !self.layers.iter().any(|l| l.kind.is_message_passing()) {
                    return Err(Error::config(
                        "graph classification needs a message-passing layer",
                    ));
                }
            }
            (Task::GraphClassification, Pooling::None) => {
                return Err(Error::config(
                    "graph classification requires global_max pooling",
                ));
            }
            (Task::NodeClassification, Pooling::GlobalMax) => {
                return Err(Error::config("node classification does not pool"));
            }
            (Task::NodeClassification, Pooling::None) => {}
        }
        Ok(())
    }
}

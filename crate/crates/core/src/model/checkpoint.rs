use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, Scheme, SlotQuant};
use crate::error::{Error, Result};
use crate::relaxed::BitWidthAssignment;
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "mixq-checkpoint/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub value: Tensor,
}

/// Self-describing model file: config, scheme, every parameter by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: ModelConfig,
    pub scheme: Scheme,
    pub nodes: usize,
    pub calibrated: bool,
    pub assignment: Option<BitWidthAssignment>,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            config: model.config.clone(),
            scheme: model.scheme.clone(),
            nodes: model.nodes,
            calibrated: model.is_calibrated(),
            assignment: model.assignment().ok(),
            params: model
                .store
                .iter()
                .map(|(_, p)| NamedTensor {
                    name: p.name.clone(),
                    value: p.value.clone(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<Model> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::config(format!(
                "unsupported checkpoint format {:?}",
                self.format
            )));
        }
        let mut model = Model::build(&self.config, self.scheme, self.nodes, 0)?;
        for nt in self.params {
            let id = model.store.find(&nt.name).ok_or_else(|| {
                Error::config(format!("checkpoint parameter {} not in the model", nt.name))
            })?;
            if model.store.value(id).shape() != nt.value.shape() {
                return Err(Error::config(format!(
                    "checkpoint parameter {} has the wrong shape",
                    nt.name
                )));
            }
            model.store.set_value(id, nt.value);
        }
        if self.calibrated {
            for c in &mut model.components {
                match &mut c.quant {
                    SlotQuant::None => {}
                    SlotQuant::Fixed(q) => q.calibrated = true,
                    SlotQuant::Relaxed(r) => {
                        r.children.iter_mut().for_each(|q| q.calibrated = true)
                    }
                }
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

impl Model {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Checkpoint::from_model(self).save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        Checkpoint::load(path)?.into_model()
    }
}

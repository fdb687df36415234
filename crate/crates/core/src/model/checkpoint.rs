use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::spectral::GroupAssignment;
use crate::tensor::Tensor;

use super::{build_model, Model, ModelError, ModelSpec};

pub const CHECKPOINT_FORMAT: &str = "gcnn-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedParam {
    pub name: String,
    pub shape: Vec<usize>,
    /// Row-major values.
    pub values: Vec<f64>,
}

/// Serialized model: spec, seed, grouping and every parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config_hash: String,
    pub seed: u64,
    pub spec: ModelSpec,
    pub assignment: Option<GroupAssignment>,
    pub params: Vec<NamedParam>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, config_hash: &str) -> Self {
        let params = model
            .param_names()
            .into_iter()
            .zip(model.params())
            .map(|(name, t)| NamedParam {
                name,
                shape: t.shape().to_vec(),
                values: t.data().to_vec(),
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            config_hash: config_hash.to_string(),
            seed: model.seed,
            spec: model.spec.clone(),
            assignment: model.assignment.clone(),
            params,
        }
    }

    /// Rebuilds the model and loads every parameter, checking names and
    /// shapes against the spec.
    pub fn to_model(&self) -> Result<Model, ModelError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!(
                "unsupported format `{}`, expected `{CHECKPOINT_FORMAT}`",
                self.format
            )));
        }
        let mut model = build_model(&self.spec, self.assignment.as_ref(), self.seed)?;
        let names = model.param_names();
        if names.len() != self.params.len() {
            return Err(ModelError::Checkpoint(format!(
                "spec has {} parameter tensors, checkpoint has {}",
                names.len(),
                self.params.len()
            )));
        }
        for ((slot, name), p) in model.params_mut().into_iter().zip(&names).zip(&self.params) {
            if &p.name != name || p.shape != slot.shape() {
                return Err(ModelError::Checkpoint(format!(
                    "expected `{name}` {:?}, found `{}` {:?}",
                    slot.shape(),
                    p.name,
                    p.shape
                )));
            }
            *slot = Tensor::new(&p.shape, p.values.clone())?;
        }
        Ok(model)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<(), ModelError> {
        serde_json::to_writer(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Self, ModelError> {
        Ok(serde_json::from_reader(input)?)
    }
}

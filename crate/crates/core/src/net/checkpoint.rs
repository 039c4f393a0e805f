//! JSON checkpoints of trained sequence models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelParams, SequenceModel, SequenceModelConfig};
use crate::error::{bail, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// `"action"` or `"slots"`.
    pub kind: String,
    pub config: SequenceModelConfig,
    /// Output label order.
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_filter: Option<String>,
    pub vocab_fingerprint: String,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model(
        kind: &str,
        model: &SequenceModel,
        labels: &[String],
        vocab_fingerprint: &str,
        action_filter: Option<&str>,
    ) -> Checkpoint {
        Checkpoint {
            format_version: FORMAT_VERSION,
            kind: kind.to_string(),
            config: model.config,
            labels: labels.to_vec(),
            action_filter: action_filter.map(str::to_string),
            vocab_fingerprint: vocab_fingerprint.to_string(),
            tensors: model
                .params
                .tensors()
                .into_iter()
                .map(|(name, shape, data)| NamedTensor { name, shape, data: data.to_vec() })
                .collect(),
        }
    }

    /// Rebuilds the model, rejecting version, name or shape mismatches.
    pub fn to_model(&self) -> Result<SequenceModel> {
        if self.format_version != FORMAT_VERSION {
            bail!(Config, "checkpoint format version {} is not supported", self.format_version);
        }
        self.config.validate()?;
        if self.labels.len() != self.config.output_dim {
            bail!(Config, "checkpoint has {} labels for {} outputs", self.labels.len(), self.config.output_dim);
        }
        let mut params = ModelParams::init(&self.config);
        let expected: Vec<(String, Vec<usize>)> = params.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
        if expected.len() != self.tensors.len() {
            bail!(Config, "checkpoint has {} tensors, expected {}", self.tensors.len(), expected.len());
        }
        for ((name, shape), t) in expected.iter().zip(&self.tensors) {
            if *name != t.name || *shape != t.shape || t.data.len() != shape.iter().product::<usize>() {
                bail!(Config, "tensor '{}' {:?} does not match expected '{name}' {shape:?}", t.name, t.shape);
            }
        }
        for (dst, t) in params.tensors_mut().into_iter().zip(&self.tensors) {
            dst.copy_from_slice(&t.data);
        }
        if !params.all_finite() {
            bail!(Config, "checkpoint contains non-finite weights");
        }
        Ok(SequenceModel { config: self.config, params })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Checkpoint> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        Checkpoint::from_json(&std::fs::read_to_string(path)?)
    }
}

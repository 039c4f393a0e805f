//! End-to-end instruction understanding.
//!
//! Text is tokenized and split into phrases; each phrase goes through the
//! action classifier, the Other gate and slot filling. Approach 1 uses one
//! shared tagger whose tags are filtered by the detected action; approach 2
//! picks a tagger per detected action.

pub mod cli;
mod config;
mod eval;
mod grid;
mod harness;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::action::{apply_other, predict_action, ActionModel, OtherSvm};
use crate::corpus::{tokenize, TaskSchema};
use crate::embed::EmbeddingMatrix;
use crate::error::{bail, Result};
use crate::slots::{check_model_map, decode_frames, post_filter, predict_tags, select_slot_model, IobTag, SlotFrame, SlotModel};
use crate::splitter::Splitter;
use crate::OTHER;

pub use config::{EmbeddingRef, PipelineConfig, SvmRef};
pub use eval::{evaluate, evaluate_instructions, tag_counts, Counts, EvalReport};
pub use grid::{run_experiment_grid, write_grid_csv, GridRow, GridSettings, Task};
pub use harness::{
    build_embedding, generate_disjoint, generate_heldout_split, other_svm_from_models, EmbeddingSettings,
    train_slot_models, HeldoutSplit,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Approach {
    /// One tagger for every action, tags filtered by the detected action.
    Shared,
    /// One tagger per action, chosen by the detected action.
    PerAction,
}

impl TryFrom<u8> for Approach {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Approach, String> {
        match v {
            1 => Ok(Approach::Shared),
            2 => Ok(Approach::PerAction),
            _ => Err(format!("approach must be 1 or 2, got {v}")),
        }
    }
}

impl From<Approach> for u8 {
    fn from(a: Approach) -> u8 {
        match a {
            Approach::Shared => 1,
            Approach::PerAction => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SlotModels {
    Shared(SlotModel),
    PerAction(BTreeMap<String, SlotModel>),
}

impl SlotModels {
    pub fn approach(&self) -> Approach {
        match self {
            SlotModels::Shared(_) => Approach::Shared,
            SlotModels::PerAction(_) => Approach::PerAction,
        }
    }
}

/// One understood command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandFrame {
    pub action: String,
    pub slots: SlotFrame,
    /// Largest raw classifier score.
    pub confidence: f64,
}

impl CommandFrame {
    /// `{"action", "slots": {type: [values]}, "confidence"}`
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "action": self.action,
            "slots": self.slots.values(),
            "confidence": self.confidence,
        })
    }
}

/// A command frame together with the per-token tags behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct Analysis {
    pub frame: CommandFrame,
    pub tags: Vec<IobTag>,
    pub in_set: bool,
}

/// Loaded models ready for inference.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub schema: TaskSchema,
    pub splitter: Splitter,
    pub embedding: EmbeddingMatrix,
    pub action: ActionModel,
    pub slots: SlotModels,
    /// `None` disables the Other gate.
    pub other: Option<OtherSvm>,
}

impl Pipeline {
    /// Checks label sets and vocabulary fingerprints before assembling.
    pub fn new(
        schema: TaskSchema,
        splitter: Splitter,
        embedding: EmbeddingMatrix,
        action: ActionModel,
        slots: SlotModels,
        other: Option<OtherSvm>,
    ) -> Result<Pipeline> {
        let fp = embedding.fingerprint();
        if action.vocab_fingerprint != fp {
            bail!(Config, "action model was trained with a different embedding");
        }
        if action.labels != schema.action_names() {
            bail!(Config, "action model labels {:?} do not match schema {}", action.labels, schema.name);
        }
        if action.model.config.input_dim != embedding.dim() {
            bail!(Config, "action model expects {}-dim input", action.model.config.input_dim);
        }
        let check = |m: &SlotModel| -> Result<()> {
            if m.vocab_fingerprint != fp || m.model.config.input_dim != embedding.dim() {
                bail!(Config, "slot model was trained with a different embedding");
            }
            Ok(())
        };
        match &slots {
            SlotModels::Shared(m) => {
                check(m)?;
                if m.action_filter.is_some() {
                    bail!(Config, "approach 1 needs a shared slot model, got a per-action one");
                }
            }
            SlotModels::PerAction(map) => {
                check_model_map(map, &schema)?;
                for (action, m) in map {
                    check(m)?;
                    if m.action_filter.as_deref() != Some(action.as_str()) {
                        bail!(Config, "slot model registered for '{action}' was trained for {:?}", m.action_filter);
                    }
                }
            }
        }
        if other.is_some_and(|o| !(o.w.is_finite() && o.b.is_finite()) || o.w == 0.0) {
            bail!(Config, "Other SVM parameters are invalid");
        }
        Ok(Pipeline { schema, splitter, embedding, action, slots, other })
    }

    pub fn approach(&self) -> Approach {
        self.slots.approach()
    }

    /// Runs one already-split command.
    pub fn analyze(&self, tokens: &[String]) -> Result<Analysis> {
        let (label, conf) = predict_action(&self.action, &self.embedding, tokens)?;
        let confidence = conf.max();
        let in_set = self.other.as_ref().is_none_or(|svm| apply_other(svm, confidence));
        if !in_set {
            return Ok(Analysis {
                frame: CommandFrame { action: OTHER.to_string(), slots: SlotFrame::default(), confidence },
                tags: vec![IobTag::Outside; tokens.len()],
                in_set,
            });
        }
        let tags = match &self.slots {
            SlotModels::Shared(model) => {
                let raw = predict_tags(model, &self.embedding, tokens)?;
                post_filter(&label, &raw, &self.schema)?
            }
            SlotModels::PerAction(models) => match select_slot_model(models, &self.schema, &label)? {
                Some(model) => predict_tags(model, &self.embedding, tokens)?,
                None => vec![IobTag::Outside; tokens.len()],
            },
        };
        let slots = decode_frames(tokens, &tags);
        Ok(Analysis { frame: CommandFrame { action: label, slots, confidence }, tags, in_set })
    }

    /// Frames for every phrase of an instruction, in phrase order.
    pub fn understand(&self, text: &str) -> Result<Vec<CommandFrame>> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Ok(Vec::new());
        }
        self.splitter
            .split(&tokens)
            .iter()
            .map(|span| Ok(self.analyze(span.slice(&tokens))?.frame))
            .collect()
    }
}

/// Convenience wrapper over [`Pipeline::understand`].
pub fn understand(pipeline: &Pipeline, text: &str) -> Result<Vec<CommandFrame>> {
    pipeline.understand(text)
}

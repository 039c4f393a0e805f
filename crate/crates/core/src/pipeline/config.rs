use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Approach, Pipeline, SlotModels};
use crate::action::{ActionModel, OtherSvm};
use crate::corpus::TaskSchema;
use crate::embed::{Backend, EmbeddingMatrix};
use crate::error::{bail, Error, Result};
use crate::net::checkpoint::Checkpoint;
use crate::slots::SlotModel;
use crate::splitter::{PosLexicon, Splitter};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingRef {
    pub backend: Backend,
    pub path: PathBuf,
}

/// SVM parameters given inline or as a path to a `{"w", "b"}` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SvmRef {
    Inline(OtherSvm),
    File(PathBuf),
}

/// On-disk pipeline description. Relative paths resolve against the
/// directory holding the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub approach: Approach,
    /// Built-in schema name (`gpsr`, `fbm3`) or a schema JSON path.
    pub schema: String,
    pub embedding: EmbeddingRef,
    pub action_checkpoint: PathBuf,
    /// One shared checkpoint for approach 1, one per action for approach 2.
    pub slot_checkpoints: Vec<PathBuf>,
    pub other_svm: SvmRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    /// Directory relative paths resolve against; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<PipelineConfig> {
        let mut cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("pipeline config: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        PipelineConfig::from_json(&text, &base)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    /// Count-level checks that need no file access.
    pub fn validate(&self) -> Result<()> {
        match self.approach {
            Approach::Shared if self.slot_checkpoints.len() != 1 => {
                bail!(Config, "approach 1 takes exactly one slot checkpoint, got {}", self.slot_checkpoints.len())
            }
            Approach::PerAction if self.slot_checkpoints.is_empty() => {
                bail!(Config, "approach 2 takes one slot checkpoint per action")
            }
            _ => Ok(()),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn schema(&self) -> Result<TaskSchema> {
        match self.schema.as_str() {
            "gpsr" | "fbm3" => TaskSchema::builtin(&self.schema),
            path => TaskSchema::load(&self.resolve(Path::new(path))),
        }
    }

    /// Loads every referenced artifact and checks their consistency.
    pub fn build(&self) -> Result<Pipeline> {
        self.validate()?;
        let schema = self.schema()?;
        let lexicon = match &self.lexicon {
            Some(p) => PosLexicon::load(&self.resolve(p))?,
            None => PosLexicon::default(),
        };
        let embedding = EmbeddingMatrix::load(&self.resolve(&self.embedding.path), self.embedding.backend)?;
        let action = ActionModel::from_checkpoint(&Checkpoint::load(&self.resolve(&self.action_checkpoint))?)?;
        let mut models = Vec::with_capacity(self.slot_checkpoints.len());
        for p in &self.slot_checkpoints {
            models.push(SlotModel::from_checkpoint(&Checkpoint::load(&self.resolve(p))?)?);
        }
        let slots = match self.approach {
            Approach::Shared => SlotModels::Shared(models.pop().expect("validated count")),
            Approach::PerAction => {
                let mut map = BTreeMap::new();
                for m in models {
                    let Some(action) = m.action_filter.clone() else {
                        bail!(Config, "approach 2 needs per-action slot models, got a shared one");
                    };
                    if !schema.has_action(&action) {
                        bail!(Config, "slot model for '{action}' does not belong to schema {}", schema.name);
                    }
                    if map.insert(action.clone(), m).is_some() {
                        bail!(Config, "two slot models for action '{action}'");
                    }
                }
                SlotModels::PerAction(map)
            }
        };
        let other = match &self.other_svm {
            SvmRef::Inline(svm) => *svm,
            SvmRef::File(p) => {
                let text = std::fs::read_to_string(self.resolve(p))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("Other SVM file: {e}")))?
            }
        };
        Pipeline::new(schema, Splitter::new(lexicon), embedding, action, slots, Some(other))
    }
}

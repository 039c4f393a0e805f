//! IOB slot tagging: tag type, sequence tagger training and prediction,
//! frame decoding, the action-conditioned tag filter and per-action model
//! selection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, TaskSchema};
use crate::embed::EmbeddingMatrix;
use crate::error::{bail, Error, Result};
use crate::net::checkpoint::Checkpoint;
use crate::net::train::{train, Example, ModelSpec, TrainReport};
use crate::net::{argmax, OutputMode, SequenceModel};
use crate::OTHER;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IobTag {
    Outside,
    Begin(String),
    Inside(String),
}

impl IobTag {
    pub fn slot(&self) -> Option<&str> {
        match self {
            IobTag::Outside => None,
            IobTag::Begin(s) | IobTag::Inside(s) => Some(s),
        }
    }

    pub fn is_outside(&self) -> bool {
        matches!(self, IobTag::Outside)
    }
}

impl fmt::Display for IobTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IobTag::Outside => f.write_str("O"),
            IobTag::Begin(s) => write!(f, "B-{s}"),
            IobTag::Inside(s) => write!(f, "I-{s}"),
        }
    }
}

impl FromStr for IobTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<IobTag> {
        if s == "O" {
            return Ok(IobTag::Outside);
        }
        match s.split_once('-') {
            Some(("B", slot)) if !slot.is_empty() => Ok(IobTag::Begin(slot.to_string())),
            Some(("I", slot)) if !slot.is_empty() => Ok(IobTag::Inside(slot.to_string())),
            _ => bail!(Validation, "'{s}' is not an IOB tag"),
        }
    }
}

pub fn parse_tags(tags: &[String]) -> Result<Vec<IobTag>> {
    tags.iter().map(|t| t.parse()).collect()
}

/// `O` followed by `B-s`, `I-s` for each slot type in sorted order.
pub fn tag_labels<'a, I: IntoIterator<Item = &'a String>>(slot_types: I) -> Vec<String> {
    let sorted: BTreeSet<&String> = slot_types.into_iter().collect();
    let mut labels = vec!["O".to_string()];
    for s in sorted {
        labels.push(format!("B-{s}"));
        labels.push(format!("I-{s}"));
    }
    labels
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpan {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

/// Slot type to the spans filling it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotFrame {
    pub slots: BTreeMap<String, Vec<SlotSpan>>,
}

impl SlotFrame {
    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Surface strings per slot type.
    pub fn values(&self) -> BTreeMap<String, Vec<String>> {
        self.slots
            .iter()
            .map(|(k, spans)| (k.clone(), spans.iter().map(|s| s.text.clone()).collect()))
            .collect()
    }
}

/// Groups B-I runs into spans. An `I` that does not continue a span of
/// the same type starts a new span, as if it were `B`.
pub fn decode_frames(tokens: &[String], tags: &[IobTag]) -> SlotFrame {
    let mut frame = SlotFrame::default();
    let mut open: Option<(String, usize)> = None;
    let close = |frame: &mut SlotFrame, open: &mut Option<(String, usize)>, end: usize| {
        if let Some((slot, start)) = open.take() {
            frame.slots.entry(slot).or_default().push(SlotSpan { start, end, text: tokens[start..end].join(" ") });
        }
    };
    for (i, tag) in tags.iter().enumerate().take(tokens.len()) {
        match tag {
            IobTag::Outside => close(&mut frame, &mut open, i),
            IobTag::Begin(slot) => {
                close(&mut frame, &mut open, i);
                open = Some((slot.clone(), i));
            }
            IobTag::Inside(slot) => {
                if open.as_ref().is_some_and(|(s, _)| s == slot) {
                    continue;
                }
                close(&mut frame, &mut open, i);
                open = Some((slot.clone(), i));
            }
        }
    }
    close(&mut frame, &mut open, tags.len().min(tokens.len()));
    frame
}

/// Replaces tags whose slot type the action does not accept with `O`.
pub fn post_filter(action: &str, tags: &[IobTag], schema: &TaskSchema) -> Result<Vec<IobTag>> {
    let allowed = schema.allowed_slots(action).map_err(|_| Error::Argument(format!("unknown action '{action}'")))?;
    Ok(tags
        .iter()
        .map(|t| match t.slot() {
            Some(s) if !allowed.contains(s) => IobTag::Outside,
            _ => t.clone(),
        })
        .collect())
}

/// Per-token tagger with its label order.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotModel {
    pub model: SequenceModel,
    pub labels: Vec<String>,
    /// Set for per-action models.
    pub action_filter: Option<String>,
    pub vocab_fingerprint: String,
}

impl SlotModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_model("slots", &self.model, &self.labels, &self.vocab_fingerprint, self.action_filter.as_deref())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<SlotModel> {
        if ck.kind != "slots" {
            bail!(Config, "checkpoint holds a '{}' model, not slots", ck.kind);
        }
        if ck.config.output_mode != OutputMode::PerStep {
            bail!(Config, "slot checkpoint must use per-step outputs");
        }
        Ok(SlotModel {
            model: ck.to_model()?,
            labels: ck.labels.clone(),
            action_filter: ck.action_filter.clone(),
            vocab_fingerprint: ck.vocab_fingerprint.clone(),
        })
    }
}

fn slot_examples(
    dataset: &Dataset,
    labels: &[String],
    embedding: &EmbeddingMatrix,
    action_filter: Option<&str>,
) -> Result<Vec<Example>> {
    let label_ids: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut examples = Vec::new();
    for (n, rec) in dataset.records.iter().enumerate() {
        if action_filter.is_some_and(|a| rec.action != a) {
            continue;
        }
        rec.validate().map_err(|e| Error::Validation(format!("record {}: {e}", n + 1)))?;
        if rec.tokens.is_empty() {
            continue;
        }
        let targets = rec
            .tags
            .iter()
            .map(|t| {
                label_ids
                    .get(t.as_str())
                    .copied()
                    .ok_or_else(|| Error::Validation(format!("record {}: tag '{t}' outside the tag set", n + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        examples.push(Example { input: embedding.encode(&rec.tokens), targets });
    }
    Ok(examples)
}

/// Trains a tagger. With `action_filter` only that action's records are
/// used and the tag set shrinks to its allowed slots.
pub fn train_slot_model(
    dataset: &Dataset,
    validation: Option<&Dataset>,
    schema: &TaskSchema,
    embedding: &EmbeddingMatrix,
    spec: &ModelSpec,
    action_filter: Option<&str>,
) -> Result<(SlotModel, TrainReport)> {
    let labels = match action_filter {
        Some(action) => tag_labels(schema.allowed_slots(action)?),
        None => tag_labels(schema.slot_lexicon.keys()),
    };
    let examples = slot_examples(dataset, &labels, embedding, action_filter)?;
    if examples.is_empty() {
        bail!(Training, "no records to train the slot model on");
    }
    let val = validation.map(|v| slot_examples(v, &labels, embedding, action_filter)).transpose()?;
    let config = spec.architecture.config(embedding.dim(), labels.len(), OutputMode::PerStep, spec.seed);
    let mut model = SequenceModel::new(config)?;
    let report = train(&mut model, &examples, val.as_deref(), &spec.train)?;
    Ok((
        SlotModel {
            model,
            labels,
            action_filter: action_filter.map(str::to_string),
            vocab_fingerprint: embedding.fingerprint(),
        },
        report,
    ))
}

/// Arg-max tag per token.
pub fn predict_tags(model: &SlotModel, embedding: &EmbeddingMatrix, tokens: &[String]) -> Result<Vec<IobTag>> {
    if tokens.is_empty() {
        bail!(Argument, "cannot tag an empty token list");
    }
    let scores = model.model.scores(&embedding.encode(tokens))?;
    scores.iter().map(|s| model.labels[argmax(s)].parse()).collect()
}

/// Picks the per-action tagger. `Other` has no tagger.
pub fn select_slot_model<'a>(
    models: &'a BTreeMap<String, SlotModel>,
    schema: &TaskSchema,
    action: &str,
) -> Result<Option<&'a SlotModel>> {
    if action == OTHER {
        return Ok(None);
    }
    if !schema.has_action(action) {
        bail!(Argument, "unknown action '{action}'");
    }
    models
        .get(action)
        .map(Some)
        .ok_or_else(|| Error::Config(format!("no slot model for action '{action}'")))
}

/// Checks that a per-action model map covers every schema action.
pub fn check_model_map(models: &BTreeMap<String, SlotModel>, schema: &TaskSchema) -> Result<()> {
    for a in &schema.actions {
        if !models.contains_key(&a.name) {
            bail!(Config, "no slot model for action '{}'", a.name);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn tags(s: &str) -> Vec<IobTag> {
        s.split_whitespace().map(|t| t.parse().unwrap()).collect()
    }

    #[test]
    fn tag_strings_round_trip() {
        for s in ["O", "B-destination", "I-what_to_tell"] {
            assert_eq!(s.parse::<IobTag>().unwrap().to_string(), s);
        }
        for bad in ["", "B-", "X-object", "b-object", "O-x"] {
            assert!(bad.parse::<IobTag>().is_err(), "{bad}");
        }
    }

    #[test]
    fn decode_examples() {
        let f = decode_frames(&toks("go living room"), &tags("O B-destination I-destination"));
        assert_eq!(f.values()["destination"], vec!["living room"]);
        assert!(decode_frames(&toks("go there"), &tags("O O")).is_empty());
        let f = decode_frames(&toks("coke"), &tags("I-object"));
        assert_eq!(f.slots["object"], vec![SlotSpan { start: 0, end: 1, text: "coke".into() }]);
        let f = decode_frames(&toks("a b c"), &tags("B-object I-source I-source"));
        assert_eq!(f.values()["object"], vec!["a"]);
        assert_eq!(f.values()["source"], vec!["b c"]);
        let f = decode_frames(&toks("a b"), &tags("B-object B-object"));
        assert_eq!(f.values()["object"], vec!["a", "b"]);
    }

    #[test]
    fn post_filter_examples() {
        let gpsr = TaskSchema::gpsr();
        let out = post_filter("motion", &tags("O O O B-what_to_tell"), &gpsr).unwrap();
        assert_eq!(out, tags("O O O O"));
        let ok = tags("O O O B-destination");
        assert_eq!(post_filter("motion", &ok, &gpsr).unwrap(), ok);
        let mixed = tags("B-object O B-destination I-destination B-person");
        let out = post_filter("place", &mixed, &gpsr).unwrap();
        assert_eq!(out, tags("B-object O B-destination I-destination O"));
        assert!(matches!(post_filter("fly", &ok, &gpsr), Err(Error::Argument(_))));
    }

    #[test]
    fn labels_are_sorted() {
        let gpsr = TaskSchema::gpsr();
        let l = tag_labels(gpsr.allowed_slots("motion").unwrap());
        assert_eq!(l, vec!["O", "B-destination", "I-destination"]);
        assert_eq!(tag_labels(gpsr.slot_lexicon.keys()).len(), 13);
    }

    #[test]
    fn other_bypasses_selection() {
        let gpsr = TaskSchema::gpsr();
        let models = BTreeMap::new();
        assert!(select_slot_model(&models, &gpsr, OTHER).unwrap().is_none());
        assert!(matches!(select_slot_model(&models, &gpsr, "motion"), Err(Error::Config(_))));
        assert!(check_model_map(&models, &gpsr).is_err());
    }
}

//! Action classification and out-of-set ("Other") rejection.
//!
//! The classifier emits raw, unnormalized scores. The rejection SVM sees only
//! the largest raw score; softmax probabilities never reach it.

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, TaskSchema};
use crate::embed::EmbeddingMatrix;
use crate::error::{bail, Error, Result};
use crate::net::checkpoint::Checkpoint;
use crate::net::train::{train, Example, ModelSpec, TrainReport};
use crate::net::{argmax, OutputMode, SequenceModel};
use crate::OTHER;

/// Raw per-action scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceVector(pub Vec<f64>);

impl ConfidenceVector {
    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionModel {
    pub model: SequenceModel,
    /// Output order, fixed at training time.
    pub labels: Vec<String>,
    pub vocab_fingerprint: String,
}

impl ActionModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_model("action", &self.model, &self.labels, &self.vocab_fingerprint, None)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<ActionModel> {
        if ck.kind != "action" {
            bail!(Config, "checkpoint holds a '{}' model, not action", ck.kind);
        }
        if ck.config.output_mode != OutputMode::LastStep {
            bail!(Config, "action checkpoint must use last-step outputs");
        }
        Ok(ActionModel {
            model: ck.to_model()?,
            labels: ck.labels.clone(),
            vocab_fingerprint: ck.vocab_fingerprint.clone(),
        })
    }

    /// Raw scores for a sentence.
    pub fn confidences(&self, embedding: &EmbeddingMatrix, tokens: &[String]) -> Result<ConfidenceVector> {
        if tokens.is_empty() {
            bail!(Argument, "cannot classify an empty token list");
        }
        let mut scores = self.model.scores(&embedding.encode(tokens))?;
        Ok(ConfidenceVector(scores.pop().expect("one output for last-step models")))
    }
}

fn action_examples(dataset: &Dataset, labels: &[String], embedding: &EmbeddingMatrix) -> Result<Vec<Example>> {
    let mut examples = Vec::with_capacity(dataset.records.len());
    for (n, rec) in dataset.records.iter().enumerate() {
        if rec.action == OTHER {
            bail!(Validation, "record {}: 'Other' records belong to the rejection SVM, not the classifier", n + 1);
        }
        let target = labels
            .iter()
            .position(|l| *l == rec.action)
            .ok_or_else(|| Error::Validation(format!("record {}: action '{}' not in schema", n + 1, rec.action)))?;
        if rec.tokens.is_empty() {
            continue;
        }
        examples.push(Example { input: embedding.encode(&rec.tokens), targets: vec![target] });
    }
    Ok(examples)
}

/// Trains a last-step classifier over the schema's actions. The validation
/// set, when given, drives learning-rate halving.
pub fn train_action(
    dataset: &Dataset,
    validation: Option<&Dataset>,
    schema: &TaskSchema,
    embedding: &EmbeddingMatrix,
    spec: &ModelSpec,
) -> Result<(ActionModel, TrainReport)> {
    if dataset.records.is_empty() {
        bail!(Training, "empty training set");
    }
    let labels = schema.action_names();
    let examples = action_examples(dataset, &labels, embedding)?;
    let val = validation.map(|v| action_examples(v, &labels, embedding)).transpose()?;
    let config = spec.architecture.config(embedding.dim(), labels.len(), OutputMode::LastStep, spec.seed);
    let mut model = SequenceModel::new(config)?;
    let report = train(&mut model, &examples, val.as_deref(), &spec.train)?;
    Ok((ActionModel { model, labels, vocab_fingerprint: embedding.fingerprint() }, report))
}

/// Arg-max label (ties to the lowest index) and the raw scores.
pub fn predict_action(
    model: &ActionModel,
    embedding: &EmbeddingMatrix,
    tokens: &[String],
) -> Result<(String, ConfidenceVector)> {
    let conf = model.confidences(embedding, tokens)?;
    Ok((model.labels[conf.argmax()].clone(), conf))
}

/// Linear SVM on the scalar max-confidence feature; `+1` means in-set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OtherSvm {
    pub w: f64,
    pub b: f64,
}

pub const SVM_LAMBDA: f64 = 0.01;
pub const SVM_EPOCHS: usize = 1000;
pub const SVM_LR: f64 = 0.1;

impl OtherSvm {
    /// Feature value where the decision flips.
    pub fn boundary(&self) -> f64 {
        -self.b / self.w
    }

    pub fn decision(&self, x: f64) -> f64 {
        self.w * x + self.b
    }
}

fn svm_objective(w: f64, b: f64, xs: &[(f64, f64)]) -> f64 {
    let hinge: f64 = xs.iter().map(|&(x, y)| (1.0 - y * (w * x + b)).max(0.0)).sum();
    0.5 * SVM_LAMBDA * w * w + hinge / xs.len() as f64
}

/// Soft-margin linear SVM fitted by full-batch subgradient descent on the
/// standardized feature; the lowest-objective iterate is kept and mapped
/// back to raw units.
pub fn train_other_svm(in_set_scores: &[f64], other_scores: &[f64]) -> Result<OtherSvm> {
    if in_set_scores.is_empty() || other_scores.is_empty() {
        bail!(Argument, "both in-set and Other scores are required");
    }
    let all: Vec<f64> = in_set_scores.iter().chain(other_scores).copied().collect();
    if !all.iter().all(|x| x.is_finite()) {
        bail!(Argument, "non-finite confidence score");
    }
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    let data: Vec<(f64, f64)> = in_set_scores
        .iter()
        .map(|&x| ((x - mean) / std, 1.0))
        .chain(other_scores.iter().map(|&x| ((x - mean) / std, -1.0)))
        .collect();

    let (mut w, mut b) = (0.0, 0.0);
    let mut best = (svm_objective(w, b, &data), w, b);
    for _ in 0..SVM_EPOCHS {
        let mut gw = SVM_LAMBDA * w;
        let mut gb = 0.0;
        for &(x, y) in &data {
            if y * (w * x + b) < 1.0 {
                gw -= y * x / n;
                gb -= y / n;
            }
        }
        w -= SVM_LR * gw;
        b -= SVM_LR * gb;
        let obj = svm_objective(w, b, &data);
        if obj < best.0 {
            best = (obj, w, b);
        }
    }
    let (_, w, b) = best;
    if w == 0.0 {
        bail!(Training, "SVM weight stayed at zero; the two score sets are indistinguishable");
    }
    Ok(OtherSvm { w: w / std, b: b - w * mean / std })
}

/// `true` when the command is in-set; the boundary itself counts as Other.
pub fn apply_other(svm: &OtherSvm, max_confidence: f64) -> bool {
    svm.decision(max_confidence) > 0.0
}

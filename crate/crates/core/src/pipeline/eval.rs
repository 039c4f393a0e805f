//! Accuracy as `(TP + TN) / (TP + TN + FP + FN)`.
//!
//! Headline counts score whether each command was understood:
//!
//! * action, per command: gold in-set and predicted correctly is TP; gold
//!   Other and predicted Other is TN; gold in-set but predicted Other is FN;
//!   any other in-set prediction that differs from gold is FP.
//! * slots, per token: a correct non-O tag is TP; O/O is TN; a gold non-O
//!   predicted as O is FN; any other wrong non-O prediction is FP.
//! * frame, per command: action and every slot span exact. Correct commands
//!   count TP (gold in-set) or TN (gold Other); wrong ones count FN when the
//!   prediction is Other and FP otherwise.
//!
//! With these rules each accuracy equals the fraction of correct decisions.
//! `per_class` additionally keeps one-vs-rest action counts per label.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Pipeline;
use crate::corpus::{Dataset, Instruction, TaggedSentence};
use crate::error::{bail, Error, Result};
use crate::slots::{decode_frames, parse_tags, IobTag};
use crate::OTHER;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Zero when no decisions were counted.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => (self.tp + self.tn) as f64 / n as f64,
        }
    }

    pub fn add(&mut self, other: &Counts) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// Counts one decision where `gold_pos` / `pred_pos` mark the positive
    /// (in-set, non-O) side.
    pub fn record(&mut self, gold_pos: bool, pred_pos: bool, correct: bool) {
        match (correct, gold_pos, pred_pos) {
            (true, true, _) => self.tp += 1,
            (true, false, _) => self.tn += 1,
            (false, true, false) => self.fn_ += 1,
            (false, _, _) => self.fp += 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub action_accuracy: f64,
    pub slot_token_accuracy: f64,
    pub frame_accuracy: f64,
    pub action: Counts,
    pub slot_tokens: Counts,
    pub frame: Counts,
    /// One-vs-rest action counts keyed by label, `Other` included.
    pub per_class: BTreeMap<String, Counts>,
    pub commands: u64,
    /// Commands the Other gate rejected.
    pub rejected: u64,
    /// Rejected commands that still carried slots; always zero.
    pub rejected_with_slots: u64,
    /// Instructions whose phrase count differed from the gold count.
    pub split_mismatches: u64,
}

impl EvalReport {
    fn finish(mut self) -> EvalReport {
        self.action_accuracy = self.action.accuracy();
        self.slot_token_accuracy = self.slot_tokens.accuracy();
        self.frame_accuracy = self.frame.accuracy();
        self
    }

    fn record_action(&mut self, labels: &[String], gold: &str, pred: &str) {
        self.action.record(gold != OTHER, pred != OTHER, gold == pred);
        for label in labels.iter().map(String::as_str).chain(std::iter::once(OTHER)) {
            let c = self.per_class.entry(label.to_string()).or_default();
            let (g, p) = (gold == label, pred == label);
            c.record(g, p, g == p);
        }
    }

    fn record_miss(&mut self, labels: &[String], gold: &TaggedSentence) -> Result<()> {
        let gold_tags = parse_tags(&gold.tags)?;
        let in_set = gold.action != OTHER;
        self.commands += 1;
        self.record_action(labels, &gold.action, "");
        self.frame.record(in_set, true, false);
        for g in &gold_tags {
            self.slot_tokens.record(!g.is_outside(), true, false);
        }
        Ok(())
    }
}

fn score_command(
    pipeline: &Pipeline,
    report: &mut EvalReport,
    labels: &[String],
    tokens: &[String],
    gold: &TaggedSentence,
) -> Result<()> {
    let gold_tags = parse_tags(&gold.tags)?;
    if gold_tags.len() != tokens.len() {
        bail!(Validation, "gold tags do not cover the phrase tokens");
    }
    let analysis = pipeline.analyze(tokens)?;
    let pred = &analysis.frame;
    report.commands += 1;
    if !analysis.in_set {
        report.rejected += 1;
        if !pred.slots.is_empty() {
            report.rejected_with_slots += 1;
        }
    }
    report.record_action(labels, &gold.action, &pred.action);
    for (g, p) in gold_tags.iter().zip(&analysis.tags) {
        report.slot_tokens.record(!g.is_outside(), !p.is_outside(), g == p);
    }
    let gold_frame = decode_frames(tokens, &gold_tags);
    let correct = gold.action == pred.action && gold_frame == pred.slots;
    report.frame.record(gold.action != OTHER, pred.action != OTHER, correct);
    Ok(())
}

fn check_schema(pipeline: &Pipeline, records: &[&TaggedSentence]) -> Result<()> {
    for (n, rec) in records.iter().enumerate() {
        rec.validate().map_err(|e| Error::Validation(format!("record {}: {e}", n + 1)))?;
        if rec.action != OTHER && !pipeline.schema.has_action(&rec.action) {
            bail!(Validation, "record {}: action '{}' not in schema {}", n + 1, rec.action, pipeline.schema.name);
        }
    }
    Ok(())
}

/// Scores already-split commands; `Other` records test the gate.
pub fn evaluate(pipeline: &Pipeline, dataset: &Dataset) -> Result<EvalReport> {
    if dataset.schema_name != pipeline.schema.name {
        bail!(Validation, "dataset is for schema {} but the pipeline uses {}", dataset.schema_name, pipeline.schema.name);
    }
    check_schema(pipeline, &dataset.records.iter().collect::<Vec<_>>())?;
    let labels = pipeline.schema.action_names();
    let mut report = EvalReport::default();
    for rec in &dataset.records {
        if rec.tokens.is_empty() {
            continue;
        }
        score_command(pipeline, &mut report, &labels, &rec.tokens, rec)?;
    }
    Ok(report.finish())
}

/// Splits each instruction and scores phrases against the gold commands by
/// position. When the phrase count or a phrase's tokens disagree with the
/// gold segmentation, every gold command of that instruction counts as wrong.
pub fn evaluate_instructions(pipeline: &Pipeline, instructions: &[Instruction]) -> Result<EvalReport> {
    check_schema(pipeline, &instructions.iter().flat_map(|i| &i.gold_commands).collect::<Vec<_>>())?;
    let labels = pipeline.schema.action_names();
    let mut report = EvalReport::default();
    for inst in instructions {
        let tokens = crate::corpus::tokenize(&inst.text);
        let phrases = pipeline.splitter.phrases(&tokens);
        let aligned = phrases.len() == inst.gold_commands.len()
            && phrases.iter().zip(&inst.gold_commands).all(|(p, g)| *p == g.tokens);
        if !aligned {
            report.split_mismatches += 1;
            for gold in &inst.gold_commands {
                report.record_miss(&labels, gold)?;
            }
            continue;
        }
        for (phrase, gold) in phrases.iter().zip(&inst.gold_commands) {
            score_command(pipeline, &mut report, &labels, phrase, gold)?;
        }
    }
    Ok(report.finish())
}

/// Token-level counts for a tagger alone.
pub fn tag_counts(gold: &[IobTag], pred: &[IobTag]) -> Counts {
    let mut c = Counts::default();
    for (g, p) in gold.iter().zip(pred) {
        c.record(!g.is_outside(), !p.is_outside(), g == p);
    }
    c
}

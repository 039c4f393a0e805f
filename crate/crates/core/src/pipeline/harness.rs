//! Data and embedding preparation shared by the grid, the CLI and tests.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Approach, SlotModels};
use crate::action::{train_other_svm, ActionModel, OtherSvm};
use crate::corpus::{generate_command, generate_commands, rng_from_seed, Dataset, TaggedSentence, TaskSchema};
use crate::embed::{build_cooc, train_glove, GloveConfig};
use crate::embed::{train_skipgram, SkipgramConfig};
use crate::embed::{build_vocab_from_sentences, Backend, EmbeddingMatrix};
use crate::error::{bail, Result};
use crate::net::train::ModelSpec;
use crate::slots::{decode_frames, parse_tags, train_slot_model};

/// Embedding hyper-parameters at desk scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSettings {
    pub dim: usize,
    pub max_vocab: usize,
    pub skipgram: SkipgramConfig,
    pub glove: GloveConfig,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        EmbeddingSettings {
            dim: 50,
            max_vocab: 50_000,
            skipgram: SkipgramConfig { subsample_t: 1e-3, epochs: 5, ..SkipgramConfig::default() },
            glove: GloveConfig { dim: 50, epochs: 25, ..GloveConfig::default() },
        }
    }
}

impl EmbeddingSettings {
    pub fn with_seed(&self, seed: u64) -> EmbeddingSettings {
        let mut s = self.clone();
        s.skipgram.seed = seed;
        s.glove.seed = seed;
        s
    }
}

/// Builds the vocabulary from `sentences` and trains the requested vectors.
pub fn build_embedding(
    backend: Backend,
    sentences: &[Vec<String>],
    settings: &EmbeddingSettings,
) -> Result<EmbeddingMatrix> {
    let vocab = build_vocab_from_sentences(sentences, settings.max_vocab)?;
    match backend {
        Backend::OneHot => Ok(EmbeddingMatrix::one_hot(vocab)),
        Backend::Skipgram => {
            let cfg = SkipgramConfig { dim: settings.dim, ..settings.skipgram.clone() };
            train_skipgram(sentences, &vocab, &cfg)?.embedding(&vocab)
        }
        Backend::Glove => {
            let cfg = GloveConfig { dim: settings.dim, ..settings.glove.clone() };
            let cooc = build_cooc(sentences, &vocab, cfg.window);
            train_glove(&cooc, &cfg)?.embedding(&vocab)
        }
    }
}

/// `n_train` commands plus `n_test` commands whose token sequences never
/// occur in the training part. Returns fewer test commands when the
/// template space is exhausted.
pub fn generate_disjoint(
    schema: &TaskSchema,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> (Vec<TaggedSentence>, Vec<TaggedSentence>) {
    let mut rng = rng_from_seed(seed);
    let train = generate_commands(schema, n_train, &mut rng);
    let seen: HashSet<&[String]> = train.iter().map(|r| r.tokens.as_slice()).collect();
    let mut test = Vec::with_capacity(n_test);
    let mut attempts = 0;
    while test.len() < n_test && attempts < n_test * 200 {
        attempts += 1;
        let rec = generate_command(schema, None, &mut rng).expect("action drawn from schema");
        if !seen.contains(rec.tokens.as_slice()) {
            test.push(rec);
        }
    }
    (train, test)
}

/// Split where a fraction of each slot type's values never reaches training.
#[derive(Clone, Debug, PartialEq)]
pub struct HeldoutSplit {
    pub train: Vec<TaggedSentence>,
    pub test: Vec<TaggedSentence>,
    /// Held-out values per slot type.
    pub heldout: BTreeMap<String, BTreeSet<String>>,
    /// Number of test sentences carrying at least one held-out value.
    pub heldout_sentences: usize,
}

/// Holds out `value_frac` of each slot lexicon (at least one value is always
/// kept for training) and makes `heldout_frac` of the test sentences carry
/// a held-out value.
pub fn generate_heldout_split(
    schema: &TaskSchema,
    n_train: usize,
    n_test: usize,
    value_frac: f64,
    heldout_frac: f64,
    seed: u64,
) -> Result<HeldoutSplit> {
    if !(0.0..1.0).contains(&value_frac) || !(0.0..=1.0).contains(&heldout_frac) {
        bail!(Argument, "fractions must lie in [0, 1)");
    }
    let mut rng = rng_from_seed(seed);
    let mut heldout: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (slot, values) in &schema.slot_lexicon {
        let n = ((values.len() as f64 * value_frac).round() as usize).min(values.len() - 1);
        let mut shuffled = values.clone();
        shuffled.shuffle(&mut rng);
        heldout.insert(slot.clone(), shuffled.into_iter().take(n).collect());
    }
    let is_heldout = |slot: &str, value: &str| heldout.get(slot).is_some_and(|s| s.contains(value));
    let seen_schema = schema.filter_lexicon(|slot, v| !is_heldout(slot, v))?;
    let novel_schema = schema.filter_lexicon(|slot, v| heldout[slot].is_empty() || is_heldout(slot, v))?;

    let n_novel = (n_test as f64 * heldout_frac).round() as usize;
    let seed2 = seed.wrapping_add(0x9e37_79b9);
    let (train, mut test) = generate_disjoint(&seen_schema, n_train, n_test - n_novel, seed2);
    let mut novel = 0;
    let mut attempts = 0;
    while novel < n_novel && attempts < n_novel * 200 + 100 {
        attempts += 1;
        let rec = generate_command(&novel_schema, None, &mut rng)?;
        let frame = decode_frames(&rec.tokens, &parse_tags(&rec.tags)?);
        let carries = frame.slots.iter().any(|(slot, spans)| spans.iter().any(|s| is_heldout(slot, &s.text)));
        if carries {
            test.push(rec);
            novel += 1;
        }
    }
    test.shuffle(&mut rng);
    Ok(HeldoutSplit { train, test, heldout, heldout_sentences: novel })
}

/// One shared tagger (approach 1) or one tagger per action (approach 2).
pub fn train_slot_models(
    train: &Dataset,
    validation: Option<&Dataset>,
    schema: &TaskSchema,
    embedding: &EmbeddingMatrix,
    spec: &ModelSpec,
    approach: Approach,
) -> Result<SlotModels> {
    match approach {
        Approach::Shared => Ok(SlotModels::Shared(train_slot_model(train, validation, schema, embedding, spec, None)?.0)),
        Approach::PerAction => {
            let mut map = BTreeMap::new();
            for action in schema.action_names() {
                let (m, _) = train_slot_model(train, validation, schema, embedding, spec, Some(&action))?;
                map.insert(action, m);
            }
            Ok(SlotModels::PerAction(map))
        }
    }
}

/// Fits the Other SVM on the classifier's max raw score.
pub fn other_svm_from_models(
    action: &ActionModel,
    embedding: &EmbeddingMatrix,
    in_set: &[TaggedSentence],
    other: &[TaggedSentence],
) -> Result<OtherSvm> {
    let score = |recs: &[TaggedSentence]| -> Result<Vec<f64>> {
        recs.iter()
            .filter(|r| !r.tokens.is_empty())
            .map(|r| Ok(action.confidences(embedding, &r.tokens)?.max()))
            .collect()
    };
    train_other_svm(&score(in_set)?, &score(other)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_test_part() {
        let schema = TaskSchema::gpsr();
        let (train, test) = generate_disjoint(&schema, 200, 50, 3);
        assert_eq!(train.len(), 200);
        assert_eq!(test.len(), 50);
        let seen: HashSet<_> = train.iter().map(|r| &r.tokens).collect();
        assert!(test.iter().all(|r| !seen.contains(&r.tokens)));
    }

    #[test]
    fn heldout_values_stay_out_of_training() {
        let schema = TaskSchema::gpsr();
        let split = generate_heldout_split(&schema, 300, 100, 0.25, 0.1, 5).unwrap();
        assert_eq!(split.heldout_sentences, 10);
        assert_eq!(split.test.len(), 100);
        for rec in &split.train {
            let frame = decode_frames(&rec.tokens, &parse_tags(&rec.tags).unwrap());
            for (slot, spans) in &frame.slots {
                assert!(spans.iter().all(|s| !split.heldout[slot].contains(&s.text)));
            }
        }
    }

    #[test]
    fn onehot_embedding_covers_corpus() {
        let sents = vec![vec!["go".to_string(), "home".to_string()]];
        let e = build_embedding(Backend::OneHot, &sents, &EmbeddingSettings::default()).unwrap();
        assert_eq!(e.dim(), 3);
    }
}

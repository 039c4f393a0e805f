use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Backend, EmbeddingMatrix, Vocabulary};
use crate::corpus::rng_from_seed;
use crate::error::{bail, Result};
use crate::net::optim::{adam_update_slice, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use crate::net::{dot, sigmoid, Matrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkipgramConfig {
    pub dim: usize,
    /// Negative samples per positive pair.
    pub k: usize,
    pub subsample_t: f64,
    /// Total window width including the center word.
    pub window: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SkipgramConfig {
    fn default() -> Self {
        SkipgramConfig { dim: 50, k: 15, subsample_t: 1e-5, window: 5, lr: 0.01, epochs: 5, seed: 1 }
    }
}

impl SkipgramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            bail!(Validation, "skip-gram dim must be >= 1");
        }
        if self.k == 0 {
            bail!(Validation, "skip-gram needs k >= 1 negative samples");
        }
        if !(self.subsample_t > 0.0 && self.subsample_t < 1.0) {
            bail!(Validation, "subsampling threshold must lie in (0, 1)");
        }
        if self.window < 3 {
            bail!(Validation, "window must cover the center word and at least one neighbour per side");
        }
        Ok(())
    }
}

/// Probability of keeping a token of relative frequency `f`.
pub fn subsample_keep_prob(f: f64, t: f64) -> f64 {
    (t / f).sqrt().min(1.0)
}

/// Input (center) and output (context) vectors plus the loss trace.
#[derive(Clone, Debug, PartialEq)]
pub struct SkipgramModel {
    pub input: Matrix,
    pub output: Matrix,
    /// Mean binary cross-entropy per (center, context) pair, per epoch.
    pub losses: Vec<f64>,
}

impl SkipgramModel {
    /// Center-word vectors; the UNK row is zero.
    pub fn embedding(&self, vocab: &Vocabulary) -> Result<EmbeddingMatrix> {
        let mut vectors = Matrix::zeros(vocab.size(), self.input.cols);
        for id in 0..vocab.words.len() {
            vectors.row_mut(id).copy_from_slice(self.input.row(id));
        }
        EmbeddingMatrix::new(Backend::Skipgram, vectors, vocab.clone())
    }
}

struct RowAdam {
    m: Matrix,
    v: Matrix,
    steps: Vec<u64>,
}

impl RowAdam {
    fn new(rows: usize, cols: usize) -> RowAdam {
        RowAdam { m: Matrix::zeros(rows, cols), v: Matrix::zeros(rows, cols), steps: vec![0; rows] }
    }

    /// Adam on one row with its own step counter.
    fn update(&mut self, params: &mut Matrix, row: usize, grad: &[f64], lr: f64) {
        self.steps[row] += 1;
        let cols = params.cols;
        let range = row * cols..(row + 1) * cols;
        adam_update_slice(
            &mut params.data[range.clone()],
            grad,
            &mut self.m.data[range.clone()],
            &mut self.v.data[range],
            lr,
            ADAM_BETA1,
            ADAM_BETA2,
            ADAM_EPS,
            self.steps[row],
        );
    }
}

fn check_counts(sentences: &[Vec<String>], vocab: &Vocabulary) -> Result<()> {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for t in sentences.iter().flatten() {
        if vocab.contains(t) {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        bail!(Validation, "corpus has no in-vocabulary tokens");
    }
    for w in &vocab.words {
        let got = counts.get(w.as_str()).copied().unwrap_or(0);
        match vocab.counts.get(w) {
            Some(&c) if c == got => {}
            Some(&c) => bail!(Validation, "vocabulary counts {c} for '{w}' but corpus has {got}"),
            None => bail!(Validation, "vocabulary word '{w}' has no count; build it from the corpus"),
        }
    }
    Ok(())
}

/// Skip-gram with negative sampling trained by per-row Adam.
///
/// Noise words are drawn from the unigram distribution raised to 3/4.
/// Out-of-vocabulary tokens are skipped; windows do not cross sentences.
pub fn train_skipgram(sentences: &[Vec<String>], vocab: &Vocabulary, cfg: &SkipgramConfig) -> Result<SkipgramModel> {
    cfg.validate()?;
    if sentences.iter().all(|s| s.is_empty()) {
        bail!(Validation, "empty corpus");
    }
    check_counts(sentences, vocab)?;

    let n = vocab.words.len();
    let total = vocab.total_count() as f64;
    let freq: Vec<f64> = vocab.words.iter().map(|w| vocab.counts[w] as f64 / total).collect();
    let keep: Vec<f64> = freq.iter().map(|&f| subsample_keep_prob(f, cfg.subsample_t)).collect();
    let noise = WeightedIndex::new(freq.iter().map(|f| f.powf(0.75))).expect("positive weights");

    let mut rng = rng_from_seed(cfg.seed);
    let scale = 0.5 / cfg.dim as f64;
    let mut input = Matrix::uniform(n, cfg.dim, scale, &mut rng);
    let mut output = Matrix::zeros(n, cfg.dim);
    let mut adam_in = RowAdam::new(n, cfg.dim);
    let mut adam_out = RowAdam::new(n, cfg.dim);
    let radius = cfg.window / 2;
    let ids: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().filter(|t| vocab.contains(t)).map(|t| vocab.id(t)).collect())
        .collect();

    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut grad_in = vec![0.0; cfg.dim];
    let mut grad_out = vec![0.0; cfg.dim];
    for _ in 0..cfg.epochs {
        let mut loss = 0.0;
        let mut pairs = 0usize;
        for sent in &ids {
            let kept: Vec<usize> = sent.iter().copied().filter(|&w| rng.gen::<f64>() < keep[w]).collect();
            for (pos, &center) in kept.iter().enumerate() {
                let lo = pos.saturating_sub(radius);
                let hi = (pos + radius).min(kept.len() - 1);
                for (cpos, &context) in kept.iter().enumerate().take(hi + 1).skip(lo) {
                    if cpos == pos {
                        continue;
                    }
                    grad_in.iter_mut().for_each(|g| *g = 0.0);
                    pairs += 1;
                    for s in 0..=cfg.k {
                        let (target, label) = if s == 0 {
                            (context, 1.0)
                        } else {
                            let neg = noise.sample(&mut rng);
                            if neg == context {
                                continue;
                            }
                            (neg, 0.0)
                        };
                        let score = dot(input.row(center), output.row(target));
                        let p = sigmoid(score);
                        loss -= if label > 0.5 { p.max(1e-12).ln() } else { (1.0 - p).max(1e-12).ln() };
                        let g = p - label;
                        for d in 0..cfg.dim {
                            grad_in[d] += g * output.get(target, d);
                            grad_out[d] = g * input.get(center, d);
                        }
                        adam_out.update(&mut output, target, &grad_out, cfg.lr);
                    }
                    adam_in.update(&mut input, center, &grad_in, cfg.lr);
                }
            }
        }
        losses.push(if pairs > 0 { loss / pairs as f64 } else { 0.0 });
    }
    if !input.data.iter().all(|x| x.is_finite()) {
        bail!(Training, "skip-gram diverged");
    }
    Ok(SkipgramModel { input, output, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::build_vocab_from_sentences;
    use crate::Error;

    #[test]
    fn keep_probability() {
        let t = 1e-5;
        assert_eq!(subsample_keep_prob(t, t), 1.0);
        assert!((subsample_keep_prob(4.0 * t, t) - 0.5).abs() < 1e-15);
        assert_eq!(subsample_keep_prob(t / 10.0, t), 1.0);
    }

    #[test]
    fn rejects_bad_config_and_mismatch() {
        let corpus = vec![vec!["a".to_string(), "b".to_string()]];
        let vocab = build_vocab_from_sentences(&corpus, 10).unwrap();
        let cfg = SkipgramConfig { k: 0, ..SkipgramConfig::default() };
        assert!(matches!(train_skipgram(&corpus, &vocab, &cfg), Err(Error::Validation(_))));
        let other = vec![vec!["a".to_string(), "a".to_string()]];
        assert!(matches!(train_skipgram(&other, &vocab, &SkipgramConfig::default()), Err(Error::Validation(_))));
    }
}

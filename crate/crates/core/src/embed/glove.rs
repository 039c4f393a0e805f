use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Backend, EmbeddingMatrix, Vocabulary};
use crate::corpus::rng_from_seed;
use crate::error::{bail, Result};
use crate::net::optim::adagrad_update_slice;
use crate::net::{dot, Matrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GloveConfig {
    pub dim: usize,
    pub window: usize,
    pub x_max: f64,
    pub alpha: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for GloveConfig {
    fn default() -> Self {
        GloveConfig { dim: 300, window: 10, x_max: 100.0, alpha: 0.75, lr: 0.05, epochs: 25, seed: 1 }
    }
}

impl GloveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            bail!(Validation, "GloVe dim must be >= 1");
        }
        if self.x_max <= 0.0 {
            bail!(Validation, "x_max must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            bail!(Validation, "alpha must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Sparse weighted co-occurrence counts keyed by `(word, context)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoocMatrix {
    /// Number of word ids the matrix indexes.
    pub size: usize,
    pub entries: BTreeMap<(usize, usize), f64>,
}

impl CoocMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn merge(&mut self, other: &CoocMatrix) {
        self.size = self.size.max(other.size);
        for (&k, &v) in &other.entries {
            *self.entries.entry(k).or_insert(0.0) += v;
        }
    }
}

/// Symmetric counts where a pair at distance `d` adds `1/d`.
/// Out-of-vocabulary tokens keep their position but contribute nothing.
pub fn build_cooc(sentences: &[Vec<String>], vocab: &Vocabulary, window: usize) -> CoocMatrix {
    let mut cooc = CoocMatrix { size: vocab.words.len(), entries: BTreeMap::new() };
    for sent in sentences {
        let ids: Vec<Option<usize>> = sent.iter().map(|t| vocab.index.get(t).copied()).collect();
        for (i, a) in ids.iter().enumerate() {
            let Some(a) = *a else { continue };
            for (d, b) in ids.iter().enumerate().skip(i + 1).take(window).map(|(j, b)| (j - i, b)) {
                let Some(b) = *b else { continue };
                let w = 1.0 / d as f64;
                *cooc.entries.entry((a, b)).or_insert(0.0) += w;
                *cooc.entries.entry((b, a)).or_insert(0.0) += w;
            }
        }
    }
    cooc
}

/// `(x / x_max)^alpha`, capped at 1.
pub fn glove_weight(x: f64, x_max: f64, alpha: f64) -> f64 {
    if x < x_max {
        (x / x_max).powf(alpha)
    } else {
        1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GloveModel {
    pub word: Matrix,
    pub context: Matrix,
    pub word_bias: Vec<f64>,
    pub context_bias: Vec<f64>,
    /// Weighted squared error summed over entries, per epoch.
    pub losses: Vec<f64>,
}

impl GloveModel {
    /// Model estimate of `log X[i, j]`.
    pub fn predict(&self, i: usize, j: usize) -> f64 {
        dot(self.word.row(i), self.context.row(j)) + self.word_bias[i] + self.context_bias[j]
    }

    /// Word vectors `w + w̃`; the UNK row is zero.
    pub fn embedding(&self, vocab: &Vocabulary) -> Result<EmbeddingMatrix> {
        let mut vectors = Matrix::zeros(vocab.size(), self.word.cols);
        for id in 0..vocab.words.len().min(self.word.rows) {
            for (d, v) in vectors.row_mut(id).iter_mut().enumerate() {
                *v = self.word.get(id, d) + self.context.get(id, d);
            }
        }
        EmbeddingMatrix::new(Backend::Glove, vectors, vocab.clone())
    }
}

/// Weighted least squares on `log X` with AdaGrad over shuffled entries.
pub fn train_glove(cooc: &CoocMatrix, cfg: &GloveConfig) -> Result<GloveModel> {
    cfg.validate()?;
    if cooc.is_empty() {
        bail!(Validation, "co-occurrence matrix is empty");
    }
    if let Some((k, v)) = cooc.entries.iter().find(|(_, &v)| v.is_nan() || v <= 0.0) {
        bail!(Validation, "co-occurrence entry {k:?} = {v} is not positive");
    }
    let n = cooc.size.max(cooc.entries.keys().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0));
    let dim = cfg.dim;
    let mut rng = rng_from_seed(cfg.seed);
    let scale = 0.5 / dim as f64;
    let mut word = Matrix::uniform(n, dim, scale, &mut rng);
    let mut context = Matrix::uniform(n, dim, scale, &mut rng);
    let mut word_bias = vec![0.0; n];
    let mut context_bias = vec![0.0; n];
    let mut acc_word = Matrix::zeros(n, dim);
    let mut acc_context = Matrix::zeros(n, dim);
    let mut acc_wb = vec![0.0; n];
    let mut acc_cb = vec![0.0; n];
    let eps = 1e-8;

    let mut entries: Vec<(usize, usize, f64)> = cooc.entries.iter().map(|(&(i, j), &x)| (i, j, x)).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut gw = vec![0.0; dim];
    let mut gc = vec![0.0; dim];
    for _ in 0..cfg.epochs {
        entries.shuffle(&mut rng);
        let mut total = 0.0;
        for &(i, j, x) in &entries {
            let diff = dot(word.row(i), context.row(j)) + word_bias[i] + context_bias[j] - x.ln();
            let weight = glove_weight(x, cfg.x_max, cfg.alpha);
            total += 0.5 * weight * diff * diff;
            let g = weight * diff;
            for d in 0..dim {
                gw[d] = g * context.get(j, d);
                gc[d] = g * word.get(i, d);
            }
            adagrad_update_slice(word.row_mut(i), &gw, acc_word.row_mut(i), cfg.lr, eps);
            adagrad_update_slice(context.row_mut(j), &gc, acc_context.row_mut(j), cfg.lr, eps);
            adagrad_update_slice(&mut word_bias[i..=i], &[g], &mut acc_wb[i..=i], cfg.lr, eps);
            adagrad_update_slice(&mut context_bias[j..=j], &[g], &mut acc_cb[j..=j], cfg.lr, eps);
        }
        losses.push(total);
    }
    if !word.data.iter().chain(&context.data).all(|x| x.is_finite()) {
        bail!(Training, "GloVe diverged");
    }
    Ok(GloveModel { word, context, word_bias, context_bias, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::build_vocab_from_sentences;
    use crate::Error;

    fn sents(s: &str) -> Vec<Vec<String>> {
        vec![s.split_whitespace().map(str::to_string).collect()]
    }

    #[test]
    fn cooc_distance_weighting() {
        let c = sents("a b");
        let v = build_vocab_from_sentences(&c, 10).unwrap();
        let m = build_cooc(&c, &v, 10);
        assert_eq!(m.get(v.id("a"), v.id("b")), 1.0);
        assert_eq!(m.get(v.id("b"), v.id("a")), 1.0);
        let c = sents("a x b");
        let v = build_vocab_from_sentences(&c, 10).unwrap();
        let m = build_cooc(&c, &v, 10);
        assert_eq!(m.get(v.id("a"), v.id("b")), 0.5);
        assert!(build_cooc(&[], &v, 10).is_empty());
        let m = build_cooc(&c, &v, 1);
        assert_eq!(m.get(v.id("a"), v.id("b")), 0.0);
    }

    #[test]
    fn weight_function() {
        assert_eq!(glove_weight(100.0, 100.0, 0.75), 1.0);
        assert!((glove_weight(50.0, 100.0, 0.75) - 0.5946).abs() < 1e-4);
        assert_eq!(glove_weight(200.0, 100.0, 0.75), 1.0);
    }

    #[test]
    fn rejects_nonpositive_entries() {
        let mut m = CoocMatrix { size: 2, entries: BTreeMap::new() };
        m.entries.insert((0, 1), 0.0);
        let cfg = GloveConfig { dim: 2, ..GloveConfig::default() };
        assert!(matches!(train_glove(&m, &cfg), Err(Error::Validation(_))));
        assert!(matches!(train_glove(&CoocMatrix::default(), &cfg), Err(Error::Validation(_))));
    }

    #[test]
    fn merge_adds_counts() {
        let c = sents("a b a");
        let v = build_vocab_from_sentences(&c, 10).unwrap();
        let mut m = build_cooc(&c, &v, 10);
        let before = m.get(0, 1);
        m.merge(&build_cooc(&c, &v, 10));
        assert_eq!(m.get(0, 1), 2.0 * before);
    }
}

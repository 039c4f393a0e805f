//! Vocabularies and word vectors: one-hot, skip-gram with negative sampling,
//! and GloVe.

mod glove;
mod skipgram;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{bail, Error, Result};
use crate::net::{Matrix, SeqInput};

pub use glove::{build_cooc, glove_weight, train_glove, CoocMatrix, GloveConfig, GloveModel};
pub use skipgram::{subsample_keep_prob, train_skipgram, SkipgramConfig, SkipgramModel};

pub const UNK: &str = "<unk>";

/// Frequency-ranked word list. Ids `0..words.len()` are the kept words;
/// `unk_id == words.len()` stands for everything else.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    pub words: Vec<String>,
    pub index: HashMap<String, usize>,
    pub counts: BTreeMap<String, u64>,
    pub unk_id: usize,
}

impl Vocabulary {
    /// Vocabulary over an explicit word list (no counts).
    pub fn from_words(words: Vec<String>) -> Result<Vocabulary> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if w == UNK || index.insert(w.clone(), i).is_some() {
                bail!(Validation, "duplicate or reserved vocabulary word '{w}'");
            }
        }
        let unk_id = words.len();
        Ok(Vocabulary { words, index, counts: BTreeMap::new(), unk_id })
    }

    /// Number of rows including UNK.
    pub fn size(&self) -> usize {
        self.words.len() + 1
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(self.unk_id)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, id: usize) -> &str {
        if id == self.unk_id {
            UNK
        } else {
            &self.words[id]
        }
    }

    pub fn total_count(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for w in &self.words {
            hasher.update(w.as_bytes());
            hasher.update(b"\n");
        }
        hex(&hasher.finalize())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Keeps the `max_size` most frequent tokens, ties broken lexicographically.
pub fn build_vocab<'a, I>(tokens: I, max_size: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a str>,
{
    if max_size == 0 {
        bail!(Argument, "max_size must be at least 1");
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for t in tokens {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().filter(|(w, _)| *w != UNK).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size);
    let mut vocab = Vocabulary::from_words(ranked.iter().map(|(w, _)| w.to_string()).collect())?;
    vocab.counts = ranked.into_iter().map(|(w, c)| (w.to_string(), c)).collect();
    Ok(vocab)
}

/// Vocabulary over every token of a set of sentences.
pub fn build_vocab_from_sentences(sentences: &[Vec<String>], max_size: usize) -> Result<Vocabulary> {
    build_vocab(sentences.iter().flatten().map(String::as_str), max_size)
}

/// Basis vector `e_id` of length `size`.
pub fn one_hot(id: usize, size: usize) -> Result<Vec<f64>> {
    if id >= size {
        bail!(Argument, "one-hot index {id} out of range {size}");
    }
    let mut v = vec![0.0; size];
    v[id] = 1.0;
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    OneHot,
    Skipgram,
    Glove,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::OneHot => "onehot",
            Backend::Skipgram => "skipgram",
            Backend::Glove => "glove",
        })
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Backend> {
        match s.to_ascii_lowercase().as_str() {
            "onehot" | "one-hot" => Ok(Backend::OneHot),
            "skipgram" | "word2vec" | "skip-gram" => Ok(Backend::Skipgram),
            "glove" => Ok(Backend::Glove),
            _ => bail!(Argument, "unknown embedding backend '{s}'"),
        }
    }
}

/// Word vectors, one row per vocabulary id (UNK last).
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub backend: Backend,
    pub vectors: Matrix,
    pub vocab: Vocabulary,
}

impl EmbeddingMatrix {
    pub fn one_hot(vocab: Vocabulary) -> EmbeddingMatrix {
        EmbeddingMatrix { backend: Backend::OneHot, vectors: Matrix::identity(vocab.size()), vocab }
    }

    pub fn new(backend: Backend, vectors: Matrix, vocab: Vocabulary) -> Result<EmbeddingMatrix> {
        if vectors.rows != vocab.size() {
            bail!(Validation, "{} vectors for a vocabulary of {}", vectors.rows, vocab.size());
        }
        if !vectors.data.iter().all(|x| x.is_finite()) {
            bail!(Validation, "embedding contains non-finite values");
        }
        Ok(EmbeddingMatrix { backend, vectors, vocab })
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols
    }

    pub fn vector(&self, word: &str) -> &[f64] {
        self.vectors.row(self.vocab.id(word))
    }

    /// Network input for a sentence; one-hot embeddings stay sparse.
    pub fn encode(&self, tokens: &[String]) -> SeqInput {
        match self.backend {
            Backend::OneHot => SeqInput::OneHot {
                ids: tokens.iter().map(|t| self.vocab.id(t)).collect(),
                dim: self.vocab.size(),
            },
            _ => SeqInput::Dense(tokens.iter().map(|t| self.vector(t).to_vec()).collect()),
        }
    }

    /// `dim × T` matrix whose columns are the token vectors.
    pub fn embed_sentence(&self, tokens: &[String]) -> Matrix {
        let mut m = Matrix::zeros(self.dim(), tokens.len());
        for (t, tok) in tokens.iter().enumerate() {
            for (r, &v) in self.vector(tok).iter().enumerate() {
                m.set(r, t, v);
            }
        }
        m
    }

    /// Identifies backend, width and vocabulary for checkpoint compatibility.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!("{}|{}|{}", self.backend, self.dim(), self.vocab.fingerprint()).as_bytes());
        hex(&hasher.finalize())
    }

    /// Text format: `"<V> <dim>"` header, then `word v1 .. vdim` per row.
    pub fn write_text<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{} {}", self.vocab.size(), self.dim())?;
        for id in 0..self.vocab.size() {
            write!(out, "{}", self.vocab.word(id))?;
            for v in self.vectors.row(id) {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_text(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R, backend: Backend) -> Result<EmbeddingMatrix> {
        let mut lines = input.lines();
        let header = lines.next().ok_or(Error::Parse { line: 1, msg: "missing header".into() })??;
        let mut parts = header.split_whitespace();
        let parse_dim = |s: Option<&str>| -> Result<usize> {
            s.and_then(|x| x.parse().ok())
                .ok_or(Error::Parse { line: 1, msg: format!("header '{header}' is not '<V> <dim>'") })
        };
        let size = parse_dim(parts.next())?;
        let dim = parse_dim(parts.next())?;
        if parts.next().is_some() || size == 0 || dim == 0 {
            bail!(Validation, "bad embedding header '{header}'");
        }
        let mut words = Vec::with_capacity(size);
        let mut data = Vec::with_capacity(size * dim);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 2;
            let mut fields = line.split(' ');
            let word = fields.next().unwrap_or_default().to_string();
            let row: Vec<f64> = fields
                .map(|f| f.parse::<f64>().map_err(|e| Error::Parse { line: lineno, msg: e.to_string() }))
                .collect::<Result<_>>()?;
            if row.len() != dim {
                bail!(Validation, "line {lineno}: {} values but header says {dim}", row.len());
            }
            words.push(word);
            data.extend(row);
        }
        if words.len() != size {
            bail!(Validation, "header promises {size} words but file has {}", words.len());
        }
        if words.last().map(String::as_str) != Some(UNK) {
            bail!(Validation, "last embedding row must be {UNK}");
        }
        words.pop();
        let vocab = Vocabulary::from_words(words)?;
        EmbeddingMatrix::new(backend, Matrix::from_vec(size, dim, data), vocab)
    }

    pub fn load(path: &Path, backend: Backend) -> Result<EmbeddingMatrix> {
        EmbeddingMatrix::read_text(BufReader::new(File::open(path)?), backend)
    }

    /// Cosine similarity of two words' vectors.
    pub fn similarity(&self, a: &str, b: &str) -> f64 {
        crate::net::cosine(self.vector(a), self.vector(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn vocab_frequency_and_ties() {
        let v = build_vocab(words("a a b"), 1).unwrap();
        assert_eq!(v.words, vec!["a"]);
        assert_eq!(v.unk_id, 1);
        assert_eq!(v.id("b"), v.unk_id);
        let v = build_vocab(words("b a"), 1).unwrap();
        assert_eq!(v.words, vec!["a"]);
        let v = build_vocab(words("c b a b"), 10).unwrap();
        assert_eq!(v.words, vec!["b", "a", "c"]);
        let v = build_vocab(std::iter::empty(), 3).unwrap();
        assert!(v.words.is_empty());
        assert_eq!(v.size(), 1);
        assert!(build_vocab(words("a"), 0).is_err());
    }

    #[test]
    fn one_hot_vectors() {
        assert_eq!(one_hot(3, 5).unwrap(), vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(one_hot(0, 1).unwrap(), vec![1.0]);
        assert!(matches!(one_hot(5, 5), Err(Error::Argument(_))));
        let e = EmbeddingMatrix::one_hot(build_vocab(words("x y z y"), 10).unwrap());
        for r in 0..e.vocab.size() {
            assert_eq!(e.vectors.row(r).iter().sum::<f64>(), 1.0);
            assert_eq!(e.vectors.row(r)[r], 1.0);
        }
    }

    #[test]
    fn embed_sentence_columns() {
        let vocab = build_vocab(words("go to kitchen go"), 10).unwrap();
        let vectors = Matrix::from_vec(4, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let e = EmbeddingMatrix::new(Backend::Glove, vectors, vocab).unwrap();
        let toks: Vec<String> = ["kitchen", "go", "zebra"].iter().map(|s| s.to_string()).collect();
        let m = e.embed_sentence(&toks);
        assert_eq!((m.rows, m.cols), (2, 3));
        assert_eq!(m.column(0), e.vector("kitchen"));
        assert_eq!(m.column(1), e.vector("go"));
        assert_eq!(m.column(2), vec![7.0, 8.0]);
        assert_eq!(e.embed_sentence(&[]).cols, 0);
        let oh = EmbeddingMatrix::one_hot(e.vocab.clone());
        assert_eq!(oh.embed_sentence(&toks[2..]).column(0), one_hot(3, 4).unwrap());
    }

    #[test]
    fn text_format_round_trip() {
        let vocab = build_vocab(words("go to kitchen go"), 10).unwrap();
        let vectors = Matrix::from_vec(4, 2, vec![0.1, -2.5e-7, 3.0, 1.0 / 3.0, 5.0, 6.0, 0.0, -0.0]);
        let e = EmbeddingMatrix::new(Backend::Skipgram, vectors, vocab).unwrap();
        let mut buf = Vec::new();
        e.write_text(&mut buf).unwrap();
        let back = EmbeddingMatrix::read_text(buf.as_slice(), Backend::Skipgram).unwrap();
        assert_eq!(back.vectors, e.vectors);
        assert_eq!(back.vocab.words, e.vocab.words);
        assert_eq!(back.fingerprint(), e.fingerprint());
    }

    #[test]
    fn text_format_rejects_bad_header() {
        let bad = "3 2\ngo 1 2\n<unk> 0 0\n";
        assert!(matches!(EmbeddingMatrix::read_text(bad.as_bytes(), Backend::Glove), Err(Error::Validation(_))));
        let bad = "2 2\ngo 1 2 3\n<unk> 0 0\n";
        assert!(EmbeddingMatrix::read_text(bad.as_bytes(), Backend::Glove).is_err());
        let bad = "2 2\ngo 1 x\n<unk> 0 0\n";
        assert!(matches!(EmbeddingMatrix::read_text(bad.as_bytes(), Backend::Glove), Err(Error::Parse { line: 2, .. })));
    }
}

//! Understanding of spoken-style robot instructions.
//!
//! An instruction such as `"go to the kitchen and grab the coke"` is split into
//! per-command phrases, each phrase is turned into word vectors, a recurrent
//! classifier picks the action (or rejects it as `Other`), and a recurrent
//! tagger labels the action's arguments in IOB format.
//!
//! The crate is organised bottom-up:
//!
//! * [`corpus`]: task schemas, the annotated command generator, tokenization and dataset files.
//! * [`splitter`]: lexicon-driven phrase splitting of multi-command instructions.
//! * [`embed`]: vocabularies, one-hot vectors, skip-gram and GloVe training.
//! * [`net`]: RNN/LSTM sequence networks trained with BPTT, Adam and AdaGrad.
//! * [`action`]: action classifier plus the SVM that detects out-of-set commands.
//! * [`slots`]: IOB tagging, decoding, tag filtering and per-action model selection.
//! * [`pipeline`]: end-to-end wiring, evaluation, the experiment grid and the CLI.

pub mod action;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod net;
pub mod pipeline;
pub mod slots;
pub mod splitter;

pub use error::{Error, Result};

/// Label used for commands whose action is outside the schema.
pub const OTHER: &str = "Other";

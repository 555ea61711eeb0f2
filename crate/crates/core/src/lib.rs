//! Span-based constituency parsing with in-order, top-down and CKY chart
//! decoders over a shared BiLSTM span encoder.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod decoders;
pub mod encoder;
pub mod eval;
pub mod model;
pub mod oracle;
pub mod synth;
pub mod training;
pub mod treebank;
pub mod vocab;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] autodiff::AutodiffError),
    #[error(transparent)]
    Tree(#[from] treebank::TreeError),
    #[error(transparent)]
    Parse(#[from] treebank::ParseError),
    #[error("empty sentence")]
    EmptySentence,
    #[error("{words} words but {tags} tags")]
    LengthMismatch { words: usize, tags: usize },
    #[error("invalid span ({i}, {j}) for sentence of length {n}")]
    InvalidSpan { i: usize, j: usize, n: usize },
    #[error("unknown label {0}")]
    UnknownLabel(String),
    #[error("invalid decoder configuration: {0}")]
    Config(String),
    #[error("internal decoder error: {0}")]
    Internal(String),
    #[error("non-finite loss at sentence {0}")]
    NonFiniteLoss(usize),
    #[error("{0}")]
    Eval(String),
    #[error("model file: {0}")]
    Model(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vocabulary must contain at least one phoneme")]
    EmptyVocabulary,

    #[error("symbol id {id} is not a phoneme of this vocabulary (|V| = {vocab_size})")]
    InvalidSymbol { id: u32, vocab_size: usize },

    #[error("BOS entries must form a contiguous prefix of the context history")]
    InvalidContext,

    #[error("context size mismatch: expected k = {expected}, got k = {got}")]
    ContextMismatch { expected: usize, got: usize },

    #[error("target length {target_len} exceeds frame count {frames}: no monotonic alignment exists")]
    InfeasibleTarget { target_len: usize, frames: usize },

    #[error("cannot train a language model on an empty corpus with kappa = 0")]
    DegenerateLm,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("enumerating {required} alignments exceeds the cap of {cap}")]
    EnumerationCap { required: u128, cap: u64 },

    #[error("loss is not finite ({0})")]
    NonFiniteLoss(f64),

    #[error("n-best list is empty")]
    EmptyNBest,

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;

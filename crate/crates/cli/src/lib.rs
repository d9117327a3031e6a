//! File formats shared by the `lftrain` binary and code that prepares its
//! inputs (tables, language models, targets, datasets, toy models).

pub mod formats;

//! Alignments, label sequences, the collapse function and blank mapping.

use crate::error::Result;
use crate::vocab::{AlignSym, MappedSym, Phoneme, Vocabulary};

/// A frame-level path over phonemes and blanks, one symbol per frame.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Alignment {
    symbols: Vec<AlignSym>,
}

impl Alignment {
    pub fn new(symbols: Vec<AlignSym>, vocab: &Vocabulary) -> Result<Self> {
        for s in &symbols {
            if let AlignSym::Label(p) = s {
                vocab.check(*p)?;
            }
        }
        Ok(Alignment { symbols })
    }

    pub fn frames(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[AlignSym] {
        &self.symbols
    }

    /// Number of non-blank entries.
    pub fn num_labels(&self) -> usize {
        self.symbols.iter().filter(|s| !s.is_blank()).count()
    }
}

/// A blank-free sequence of phonemes.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct LabelSequence {
    labels: Vec<Phoneme>,
}

impl LabelSequence {
    pub fn new(labels: Vec<Phoneme>, vocab: &Vocabulary) -> Result<Self> {
        for &p in &labels {
            vocab.check(p)?;
        }
        Ok(LabelSequence { labels })
    }

    pub fn empty() -> Self {
        LabelSequence { labels: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Phoneme] {
        &self.labels
    }

    pub fn get(&self, pos: usize) -> Phoneme {
        self.labels[pos]
    }
}

/// Removes blanks, keeping label order.
pub fn collapse(y: &Alignment) -> LabelSequence {
    LabelSequence {
        labels: y.symbols().iter().filter_map(|s| s.label()).collect(),
    }
}

/// Replaces each blank with the most recent preceding label. Frames before
/// the first emission map to the NO_LABEL sentinel.
pub fn map_blanks(y: &Alignment) -> Vec<MappedSym> {
    let mut out = Vec::with_capacity(y.frames());
    let mut cur = MappedSym::NoLabel;
    for s in y.symbols() {
        if let AlignSym::Label(p) = s {
            cur = MappedSym::Label(*p);
        }
        out.push(cur);
    }
    out
}

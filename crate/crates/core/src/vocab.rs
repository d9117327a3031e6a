//! Vocabulary and symbol types.
//!
//! Phonemes are dense integer ids `0..|V|`. The blank, BOS and PAD symbols
//! are reserved sentinels outside that range and are never members of the
//! vocabulary itself.

use crate::error::{Error, Result};

/// A phoneme id in `0..|V|`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Phoneme(pub u32);

/// One entry of a frame-level alignment: a phoneme or the blank.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum AlignSym {
    Blank,
    Label(Phoneme),
}

impl AlignSym {
    pub fn is_blank(self) -> bool {
        matches!(self, AlignSym::Blank)
    }

    pub fn label(self) -> Option<Phoneme> {
        match self {
            AlignSym::Blank => None,
            AlignSym::Label(p) => Some(p),
        }
    }
}

/// Output of the blank-mapping function: the most recent label, or the
/// NO_LABEL sentinel for frames before the first emission.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MappedSym {
    NoLabel,
    Label(Phoneme),
}

/// The phoneme inventory. Only its size matters: ids are `0..size`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Vocabulary {
    size: usize,
}

impl Vocabulary {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::EmptyVocabulary);
        }
        Ok(Vocabulary { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn contains(&self, p: Phoneme) -> bool {
        (p.0 as usize) < self.size
    }

    pub fn check(&self, p: Phoneme) -> Result<Phoneme> {
        if self.contains(p) {
            Ok(p)
        } else {
            Err(Error::InvalidSymbol {
                id: p.0,
                vocab_size: self.size,
            })
        }
    }

    pub fn phonemes(&self) -> impl Iterator<Item = Phoneme> {
        (0..self.size as u32).map(Phoneme)
    }

    /// Symbols per posterior row: all phonemes plus blank.
    pub fn num_outputs(&self) -> usize {
        self.size + 1
    }

    /// Index of a symbol within a posterior row. Phonemes keep their id,
    /// blank is stored last.
    pub fn output_index(&self, sym: AlignSym) -> usize {
        match sym {
            AlignSym::Label(p) => p.0 as usize,
            AlignSym::Blank => self.size,
        }
    }

    pub fn blank_index(&self) -> usize {
        self.size
    }
}

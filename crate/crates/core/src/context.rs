//! Bounded label histories and their dense enumeration.
//!
//! A context state is the BOS-padded tuple of the last `k` emitted labels.
//! States are enumerated as dense integers (mixed-radix over the label
//! suffix) so that DP tables are flat arrays indexed by `(t, state)`.

use crate::error::{Error, Result};
use crate::vocab::{AlignSym, Phoneme, Vocabulary};

/// One slot of a context history.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum CtxSym {
    Bos,
    Label(Phoneme),
}

/// A length-`k` label history, BOS-padded on the left.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct ContextState {
    hist: Vec<CtxSym>,
}

impl ContextState {
    /// Validates that BOS entries form a contiguous prefix.
    pub fn new(hist: Vec<CtxSym>, vocab: &Vocabulary) -> Result<Self> {
        if hist.is_empty() {
            return Err(Error::InvalidContext);
        }
        let mut seen_label = false;
        for &s in &hist {
            match s {
                CtxSym::Bos if seen_label => return Err(Error::InvalidContext),
                CtxSym::Bos => {}
                CtxSym::Label(p) => {
                    vocab.check(p)?;
                    seen_label = true;
                }
            }
        }
        Ok(ContextState { hist })
    }

    /// The all-BOS history of size `k` (nothing emitted yet).
    pub fn start(k: usize) -> Self {
        ContextState {
            hist: vec![CtxSym::Bos; k],
        }
    }

    /// History holding the last `min(len, k)` labels of `labels`.
    pub fn of_prefix(labels: &[Phoneme], k: usize) -> Self {
        let take = labels.len().min(k);
        let mut hist = vec![CtxSym::Bos; k - take];
        hist.extend(labels[labels.len() - take..].iter().map(|&p| CtxSym::Label(p)));
        ContextState { hist }
    }

    pub fn k(&self) -> usize {
        self.hist.len()
    }

    pub fn history(&self) -> &[CtxSym] {
        &self.hist
    }

    /// The non-BOS suffix, oldest first.
    pub fn labels(&self) -> impl Iterator<Item = Phoneme> + '_ {
        self.hist.iter().filter_map(|s| match s {
            CtxSym::Label(p) => Some(*p),
            CtxSym::Bos => None,
        })
    }

    /// Most recently emitted label, if any.
    pub fn last_label(&self) -> Option<Phoneme> {
        match self.hist.last() {
            Some(CtxSym::Label(p)) => Some(*p),
            _ => None,
        }
    }

    /// Shift-append on a label; identity on blank. Reserved symbols are not
    /// representable as `AlignSym`, but out-of-vocabulary ids still error.
    pub fn advance(&self, sym: AlignSym, vocab: &Vocabulary) -> Result<ContextState> {
        match sym {
            AlignSym::Blank => Ok(self.clone()),
            AlignSym::Label(p) => {
                vocab.check(p)?;
                let mut hist = self.hist.clone();
                hist.remove(0);
                hist.push(CtxSym::Label(p));
                Ok(ContextState { hist })
            }
        }
    }
}

/// Dense enumeration of every valid context state for a `(vocab, k)` pair,
/// with a precomputed label-transition table.
///
/// A state with `j` labels occupies codes `offset(j) ..= offset(j+1) - 1`
/// where `offset(j) = sum_{m<j} |V|^m`; within a block the label suffix is a
/// base-`|V|` number, oldest label most significant. The start state (all
/// BOS) is code 0.
#[derive(Clone, Debug)]
pub struct ContextTable {
    vocab: Vocabulary,
    k: usize,
    offsets: Vec<usize>,
    next: Vec<u32>,
    last: Vec<Option<Phoneme>>,
}

/// Dense index of a context state.
pub type StateCode = usize;

impl ContextTable {
    pub fn new(vocab: Vocabulary, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("context size k must be >= 1".into()));
        }
        let v = vocab.size();
        let mut offsets = Vec::with_capacity(k + 2);
        offsets.push(0usize);
        let mut block = 1usize;
        for _ in 0..=k {
            let prev = *offsets.last().unwrap();
            offsets.push(prev + block);
            block = block
                .checked_mul(v)
                .ok_or_else(|| Error::InvalidParameter("context space overflows".into()))?;
        }
        let num_states = offsets[k + 1];

        let mut table = ContextTable {
            vocab,
            k,
            offsets,
            next: vec![0; num_states * v],
            last: vec![None; num_states],
        };
        for code in 0..num_states {
            let state = table.decode(code);
            table.last[code] = state.last_label();
            for p in vocab.phonemes() {
                let succ = state.advance(AlignSym::Label(p), &vocab).expect("valid");
                table.next[code * v + p.0 as usize] = table.encode(&succ) as u32;
            }
        }
        Ok(table)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_states(&self) -> usize {
        self.offsets[self.k + 1]
    }

    /// Code of the all-BOS start state.
    pub fn start(&self) -> StateCode {
        0
    }

    pub fn encode(&self, state: &ContextState) -> StateCode {
        assert_eq!(state.k(), self.k, "context size mismatch");
        let labels: Vec<Phoneme> = state.labels().collect();
        self.encode_suffix(&labels)
    }

    /// Code of the state holding the last `min(len, k)` labels of `labels`.
    pub fn code_of_prefix(&self, labels: &[Phoneme]) -> StateCode {
        let take = labels.len().min(self.k);
        self.encode_suffix(&labels[labels.len() - take..])
    }

    fn encode_suffix(&self, suffix: &[Phoneme]) -> StateCode {
        let v = self.vocab.size();
        let mut rem = 0usize;
        for &p in suffix {
            rem = rem * v + p.0 as usize;
        }
        self.offsets[suffix.len()] + rem
    }

    pub fn decode(&self, code: StateCode) -> ContextState {
        let v = self.vocab.size();
        let j = (0..=self.k)
            .find(|&j| code < self.offsets[j + 1])
            .expect("state code out of range");
        let mut rem = code - self.offsets[j];
        let mut labels = vec![Phoneme(0); j];
        for slot in labels.iter_mut().rev() {
            *slot = Phoneme((rem % v) as u32);
            rem /= v;
        }
        ContextState::of_prefix(&labels, self.k)
    }

    /// Successor code after emitting label `p`. Precomputed.
    #[inline]
    pub fn advance_label(&self, code: StateCode, p: Phoneme) -> StateCode {
        self.next[code * self.vocab.size() + p.0 as usize] as usize
    }

    /// Successor code for any symbol; blank keeps the state.
    pub fn advance(&self, code: StateCode, sym: AlignSym) -> Result<StateCode> {
        match sym {
            AlignSym::Blank => Ok(code),
            AlignSym::Label(p) => {
                self.vocab.check(p)?;
                Ok(self.advance_label(code, p))
            }
        }
    }

    /// Most recent label of the state, `None` for the start block.
    #[inline]
    pub fn last_label(&self, code: StateCode) -> Option<Phoneme> {
        self.last[code]
    }

    pub fn states(&self) -> impl Iterator<Item = StateCode> {
        0..self.num_states()
    }
}

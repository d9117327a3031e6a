//! Per-frame, per-context log-posterior tables: the model boundary every
//! loss consumes.

use rand::Rng;

use crate::context::{ContextTable, StateCode};
use crate::error::{Error, Result};
use crate::math::logsumexp;
use crate::vocab::{AlignSym, Phoneme, Vocabulary};

/// Tolerance for the per-row normalization invariant.
pub const ROW_NORM_TOL: f64 = 1e-9;

/// Log-distributions over phonemes plus blank for every frame and context
/// state. Entries are laid out row-major as `(t, state, symbol)` with blank
/// stored last in each row.
#[derive(Clone, Debug)]
pub struct PosteriorTable {
    ctx: ContextTable,
    frames: usize,
    log_probs: Vec<f64>,
}

impl PosteriorTable {
    /// Builds a table and validates shape, finiteness and row normalization.
    pub fn new(vocab: Vocabulary, k: usize, frames: usize, log_probs: Vec<f64>) -> Result<Self> {
        let table = Self::from_log_probs_unchecked(vocab, k, frames, log_probs)?;
        table.validate()?;
        Ok(table)
    }

    /// Builds a table checking only the shape. Used where rows are
    /// deliberately unnormalized, e.g. finite-difference perturbations.
    pub fn from_log_probs_unchecked(
        vocab: Vocabulary,
        k: usize,
        frames: usize,
        log_probs: Vec<f64>,
    ) -> Result<Self> {
        let ctx = ContextTable::new(vocab, k)?;
        let expected = frames * ctx.num_states() * vocab.num_outputs();
        if log_probs.len() != expected {
            return Err(Error::InvalidTable(format!(
                "expected {expected} entries for T={frames}, k={k}, |V|={}, got {}",
                vocab.size(),
                log_probs.len()
            )));
        }
        Ok(PosteriorTable {
            ctx,
            frames,
            log_probs,
        })
    }

    /// Uniform rows: every symbol gets probability 1 / (|V| + 1).
    pub fn uniform(vocab: Vocabulary, k: usize, frames: usize) -> Result<Self> {
        let ctx = ContextTable::new(vocab, k)?;
        let n = frames * ctx.num_states() * vocab.num_outputs();
        let lp = -((vocab.num_outputs() as f64).ln());
        Ok(PosteriorTable {
            ctx,
            frames,
            log_probs: vec![lp; n],
        })
    }

    /// Random normalized rows: log-softmax of iid logits.
    pub fn random<R: Rng>(vocab: Vocabulary, k: usize, frames: usize, rng: &mut R) -> Result<Self> {
        let ctx = ContextTable::new(vocab, k)?;
        let outputs = vocab.num_outputs();
        let mut log_probs = Vec::with_capacity(frames * ctx.num_states() * outputs);
        for _ in 0..frames * ctx.num_states() {
            let logits: Vec<f64> = (0..outputs).map(|_| rng.random_range(-2.0..2.0)).collect();
            let z = logsumexp(&logits);
            log_probs.extend(logits.iter().map(|l| l - z));
        }
        Ok(PosteriorTable {
            ctx,
            frames,
            log_probs,
        })
    }

    /// Rows that put probability `1 - off_mass` on one chosen symbol per
    /// `(frame, state)` and spread the rest uniformly. `off_mass = 0` yields
    /// hard rows whose other entries are log-zero.
    pub fn peaked<F>(vocab: Vocabulary, k: usize, frames: usize, off_mass: f64, pick: F) -> Result<Self>
    where
        F: Fn(usize, StateCode) -> AlignSym,
    {
        if !(0.0..1.0).contains(&off_mass) {
            return Err(Error::InvalidParameter(format!(
                "off_mass must lie in [0, 1), got {off_mass}"
            )));
        }
        let ctx = ContextTable::new(vocab, k)?;
        let outputs = vocab.num_outputs();
        let (main, rest) = if off_mass == 0.0 {
            (0.0, crate::math::LOG_ZERO)
        } else {
            ((1.0 - off_mass).ln(), (off_mass / (outputs - 1) as f64).ln())
        };
        let mut log_probs = vec![0.0; frames * ctx.num_states() * outputs];
        for t in 0..frames {
            for u in ctx.states() {
                let base = (t * ctx.num_states() + u) * outputs;
                let chosen = vocab.output_index(pick(t, u));
                for y in 0..outputs {
                    log_probs[base + y] = if y == chosen { main } else { rest };
                }
            }
        }
        Ok(PosteriorTable {
            ctx,
            frames,
            log_probs,
        })
    }

    /// Random normalized rows from a fixed seed; deterministic across runs.
    pub fn seeded(vocab: Vocabulary, k: usize, frames: usize, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Self::random(vocab, k, frames, &mut rng)
    }

    /// Checks the row-normalization invariant and entry finiteness.
    pub fn validate(&self) -> Result<()> {
        let outputs = self.vocab().num_outputs();
        for (row_idx, row) in self.log_probs.chunks(outputs).enumerate() {
            for &x in row {
                if x.is_nan() || x == f64::INFINITY {
                    return Err(Error::InvalidTable(format!(
                        "non-finite log-probability {x} in row {row_idx}"
                    )));
                }
            }
            let z = logsumexp(row);
            if z.abs() > ROW_NORM_TOL {
                return Err(Error::InvalidTable(format!(
                    "row {row_idx} has logsumexp {z:e}, expected 0"
                )));
            }
        }
        Ok(())
    }

    pub fn vocab(&self) -> &Vocabulary {
        self.ctx.vocab()
    }

    pub fn k(&self) -> usize {
        self.ctx.k()
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn context(&self) -> &ContextTable {
        &self.ctx
    }

    pub fn num_entries(&self) -> usize {
        self.log_probs.len()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// Flat index of `(frame, state, symbol)`; this is the layout gradients
    /// are reported in.
    #[inline]
    pub fn entry_index(&self, t: usize, state: StateCode, sym: AlignSym) -> usize {
        let outputs = self.vocab().num_outputs();
        (t * self.ctx.num_states() + state) * outputs + self.vocab().output_index(sym)
    }

    /// Log-probability of a symbol at frame `t` (0-based) in context `state`.
    #[inline]
    pub fn logp(&self, t: usize, state: StateCode, sym: AlignSym) -> f64 {
        self.log_probs[self.entry_index(t, state, sym)]
    }

    #[inline]
    pub fn logp_label(&self, t: usize, state: StateCode, p: Phoneme) -> f64 {
        self.logp(t, state, AlignSym::Label(p))
    }

    #[inline]
    pub fn logp_blank(&self, t: usize, state: StateCode) -> f64 {
        self.logp(t, state, AlignSym::Blank)
    }

    /// Copy with one flat entry shifted by `delta`, skipping validation.
    pub fn perturbed(&self, flat_index: usize, delta: f64) -> Self {
        let mut out = self.clone();
        out.log_probs[flat_index] += delta;
        out
    }

    /// Mean blank probability over all rows.
    pub fn mean_blank_posterior(&self) -> f64 {
        let outputs = self.vocab().num_outputs();
        let blank = self.vocab().blank_index();
        let rows = self.frames * self.ctx.num_states();
        let sum: f64 = self
            .log_probs
            .chunks(outputs)
            .map(|row| row[blank].exp())
            .sum();
        sum / rows as f64
    }
}

#[cfg(test)]
pub(crate) fn test_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_rows_are_normalized() {
        let v = Vocabulary::new(2).unwrap();
        let t = PosteriorTable::uniform(v, 1, 3).unwrap();
        t.validate().unwrap();
        assert_eq!(t.num_entries(), 3 * 3 * 3);
        assert!((t.logp_blank(0, 0) - (1.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn random_rows_are_normalized() {
        let v = Vocabulary::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = PosteriorTable::random(v, 2, 4, &mut rng).unwrap();
        t.validate().unwrap();
        let outputs = v.num_outputs();
        for row in t.log_probs().chunks(outputs) {
            assert!(logsumexp(row).abs() <= ROW_NORM_TOL);
        }
    }

    #[test]
    fn rejects_unnormalized_rows() {
        let v = Vocabulary::new(1).unwrap();
        let bad = vec![-0.1, -0.1]; // logsumexp well above 0
        assert!(PosteriorTable::new(v, 1, 1, bad).is_err());
    }

    #[test]
    fn rejects_wrong_shape() {
        let v = Vocabulary::new(1).unwrap();
        assert!(PosteriorTable::new(v, 1, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn perturbed_shifts_one_entry() {
        let v = Vocabulary::new(2).unwrap();
        let t = PosteriorTable::uniform(v, 1, 2).unwrap();
        let idx = t.entry_index(1, 2, AlignSym::Blank);
        let p = t.perturbed(idx, 0.25);
        assert!((p.logp_blank(1, 2) - (t.logp_blank(1, 2) + 0.25)).abs() < 1e-15);
        assert_eq!(p.logp_blank(0, 2), t.logp_blank(0, 2));
    }
}

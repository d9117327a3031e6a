//! Context-limited phoneme language model and the combined label/blank
//! scores used by every discriminative loss.

use crate::context::{ContextTable, StateCode};
use crate::error::{Error, Result};
use crate::seq::LabelSequence;
use crate::table::PosteriorTable;
use crate::vocab::{Phoneme, Vocabulary};

/// Exponents applied to the model and LM factors of the sequence score.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct ScoreScales {
    alpha: f64,
    beta: f64,
}

impl ScoreScales {
    /// Model score only: alpha = 1, beta = 0.
    pub const MODEL_ONLY: ScoreScales = ScoreScales {
        alpha: 1.0,
        beta: 0.0,
    };

    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0) || !(beta >= 0.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "scales require alpha > 0 and beta >= 0, got alpha={alpha}, beta={beta}"
            )));
        }
        Ok(ScoreScales { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl Default for ScoreScales {
    /// The tuned defaults: alpha = 1.2, beta = 0.3.
    fn default() -> Self {
        ScoreScales {
            alpha: 1.2,
            beta: 0.3,
        }
    }
}

/// Add-kappa n-gram model over phonemes with the same bounded context as the
/// transducer. `k = 1` is a bigram.
#[derive(Clone, Debug)]
pub struct NGramPhonemeLM {
    ctx: ContextTable,
    log_probs: Vec<f64>,
    kappa: f64,
}

impl NGramPhonemeLM {
    /// Maximum-likelihood training with add-kappa smoothing. Contexts that
    /// never occur in the corpus fall back to the uniform distribution.
    pub fn train(
        corpus: &[LabelSequence],
        vocab: Vocabulary,
        k: usize,
        kappa: f64,
    ) -> Result<Self> {
        if kappa < 0.0 || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "smoothing constant must be finite and >= 0, got {kappa}"
            )));
        }
        if corpus.is_empty() && kappa == 0.0 {
            return Err(Error::DegenerateLm);
        }
        let ctx = ContextTable::new(vocab, k)?;
        let v = vocab.size();
        let mut pair_counts = vec![0u64; ctx.num_states() * v];
        let mut ctx_counts = vec![0u64; ctx.num_states()];
        for seq in corpus {
            let mut state = ctx.start();
            for &label in seq.labels() {
                vocab.check(label)?;
                pair_counts[state * v + label.0 as usize] += 1;
                ctx_counts[state] += 1;
                state = ctx.advance_label(state, label);
            }
        }

        let mut log_probs = vec![0.0; ctx.num_states() * v];
        for u in ctx.states() {
            let total = ctx_counts[u] as f64 + kappa * v as f64;
            for a in 0..v {
                let num = pair_counts[u * v + a] as f64 + kappa;
                log_probs[u * v + a] = if total > 0.0 {
                    num.ln() - total.ln()
                } else {
                    // unseen context, no smoothing: uniform fallback
                    -(v as f64).ln()
                };
            }
        }
        Ok(NGramPhonemeLM {
            ctx,
            log_probs,
            kappa,
        })
    }

    /// Uniform model: log P(a|u) = -log |V| for every context.
    pub fn uniform(vocab: Vocabulary, k: usize) -> Result<Self> {
        let ctx = ContextTable::new(vocab, k)?;
        let lp = -((vocab.size() as f64).ln());
        let n = ctx.num_states() * vocab.size();
        Ok(NGramPhonemeLM {
            ctx,
            log_probs: vec![lp; n],
            kappa: 0.0,
        })
    }

    /// Random normalized rows from a fixed seed; deterministic across runs.
    pub fn seeded(vocab: Vocabulary, k: usize, seed: u64) -> Result<Self> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let ctx = ContextTable::new(vocab, k)?;
        let v = vocab.size();
        let mut log_probs = Vec::with_capacity(ctx.num_states() * v);
        for _ in ctx.states() {
            let logits: Vec<f64> = (0..v).map(|_| rng.random_range(-1.5..1.5)).collect();
            let z = crate::math::logsumexp(&logits);
            log_probs.extend(logits.iter().map(|l| l - z));
        }
        Ok(NGramPhonemeLM {
            ctx,
            log_probs,
            kappa: 0.0,
        })
    }

    /// Builds a model from raw rows; rows must be normalized over phonemes.
    pub fn from_log_probs(vocab: Vocabulary, k: usize, log_probs: Vec<f64>) -> Result<Self> {
        let ctx = ContextTable::new(vocab, k)?;
        let expected = ctx.num_states() * vocab.size();
        if log_probs.len() != expected {
            return Err(Error::InvalidParameter(format!(
                "expected {expected} LM entries, got {}",
                log_probs.len()
            )));
        }
        let lm = NGramPhonemeLM {
            ctx,
            log_probs,
            kappa: 0.0,
        };
        lm.validate()?;
        Ok(lm)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.vocab().size();
        for (u, row) in self.log_probs.chunks(v).enumerate() {
            let z = crate::math::logsumexp(row);
            if z.abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "LM row {u} has logsumexp {z:e}, expected 0"
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

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn context(&self) -> &ContextTable {
        &self.ctx
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// log P(a | u).
    #[inline]
    pub fn logp(&self, state: StateCode, a: Phoneme) -> f64 {
        self.log_probs[state * self.vocab().size() + a.0 as usize]
    }
}

/// Combined label score: `alpha * log P_model(a|u,t) + beta * log P_LM(a|u)`.
/// `t` is a 0-based frame index.
pub fn q_label(
    table: &PosteriorTable,
    lm: &NGramPhonemeLM,
    scales: ScoreScales,
    t: usize,
    u: StateCode,
    a: Phoneme,
) -> f64 {
    scales.alpha() * table.logp_label(t, u, a) + scales.beta() * lm.logp(u, a)
}

/// Blank score: `alpha * log P_model(blank|u,t)`. The LM contributes no
/// blank factor.
pub fn q_blank(table: &PosteriorTable, scales: ScoreScales, t: usize, u: StateCode) -> f64 {
    scales.alpha() * table.logp_blank(t, u)
}

/// Bundles table, optional LM and scales after checking the contexts agree.
/// All DP losses read their edge weights through this.
#[derive(Clone, Copy)]
pub(crate) struct Scorer<'a> {
    pub table: &'a PosteriorTable,
    pub lm: Option<&'a NGramPhonemeLM>,
    pub scales: ScoreScales,
}

impl<'a> Scorer<'a> {
    pub fn new(
        table: &'a PosteriorTable,
        lm: Option<&'a NGramPhonemeLM>,
        scales: ScoreScales,
    ) -> Result<Self> {
        if let Some(lm) = lm {
            if lm.k() != table.k() {
                return Err(Error::ContextMismatch {
                    expected: table.k(),
                    got: lm.k(),
                });
            }
            if lm.vocab().size() != table.vocab().size() {
                return Err(Error::InvalidParameter(format!(
                    "LM vocabulary size {} does not match table vocabulary size {}",
                    lm.vocab().size(),
                    table.vocab().size()
                )));
            }
        }
        Ok(Scorer { table, lm, scales })
    }

    #[inline]
    pub fn label(&self, t: usize, u: StateCode, a: Phoneme) -> f64 {
        match self.lm {
            Some(lm) => q_label(self.table, lm, self.scales, t, u, a),
            None => self.scales.alpha() * self.table.logp_label(t, u, a),
        }
    }

    #[inline]
    pub fn blank(&self, t: usize, u: StateCode) -> f64 {
        q_blank(self.table, self.scales, t, u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn voc(n: usize) -> Vocabulary {
        Vocabulary::new(n).unwrap()
    }

    fn seq(ids: &[u32], v: &Vocabulary) -> LabelSequence {
        LabelSequence::new(ids.iter().map(|&i| Phoneme(i)).collect(), v).unwrap()
    }

    #[test]
    fn bigram_counts_with_add_one() {
        // corpus {(a,b), (a,a)}: context a seen twice, P(a|a) = (1+1)/(2+2)
        let v = voc(2);
        let corpus = [seq(&[0, 1], &v), seq(&[0, 0], &v)];
        let lm = NGramPhonemeLM::train(&corpus, v, 1, 1.0).unwrap();
        let ctx_a = lm.context().code_of_prefix(&[Phoneme(0)]);
        assert!((lm.logp(ctx_a, Phoneme(0)) - 0.5f64.ln()).abs() < 1e-12);
        lm.validate().unwrap();
    }

    #[test]
    fn unsmoothed_single_observation() {
        let v = voc(2);
        let corpus = [seq(&[0], &v)];
        let lm = NGramPhonemeLM::train(&corpus, v, 1, 0.0).unwrap();
        let bos = lm.context().start();
        assert!((lm.logp(bos, Phoneme(0)) - 0.0).abs() < 1e-12);
        assert_eq!(lm.logp(bos, Phoneme(1)), f64::NEG_INFINITY);
    }

    #[test]
    fn uniform_corpus_gives_uniform_rows() {
        let v = voc(2);
        // every bigram exactly once from each context
        let corpus = [
            seq(&[0, 0], &v),
            seq(&[0, 1], &v),
            seq(&[1, 0], &v),
            seq(&[1, 1], &v),
        ];
        let lm = NGramPhonemeLM::train(&corpus, v, 1, 0.0).unwrap();
        for u in lm.context().states() {
            for a in v.phonemes() {
                assert!(
                    (lm.logp(u, a) - 0.5f64.ln()).abs() < 1e-12,
                    "context {u} label {a:?}"
                );
            }
        }
    }

    #[test]
    fn empty_corpus_without_smoothing_is_degenerate() {
        let v = voc(2);
        assert!(matches!(
            NGramPhonemeLM::train(&[], v, 1, 0.0),
            Err(Error::DegenerateLm)
        ));
        // with smoothing it degrades to the uniform model
        let lm = NGramPhonemeLM::train(&[], v, 1, 1.0).unwrap();
        assert!((lm.logp(0, Phoneme(1)) - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn q_scores_apply_scales() {
        let v = voc(1);
        // single phoneme: P(a|u) = 1 under any corpus
        let lm = NGramPhonemeLM::uniform(v, 1).unwrap();
        let table = PosteriorTable::uniform(v, 1, 2).unwrap();

        // alpha = 1, beta = 0: exactly the model log-probability
        let s = ScoreScales::MODEL_ONLY;
        assert_eq!(q_label(&table, &lm, s, 0, 0, Phoneme(0)), table.logp_label(0, 0, Phoneme(0)));
        assert_eq!(q_blank(&table, s, 1, 0), table.logp_blank(1, 0));

        // direct formula
        let s = ScoreScales::new(1.2, 0.3).unwrap();
        let expect = 1.2 * table.logp_label(0, 0, Phoneme(0)) + 0.3 * lm.logp(0, Phoneme(0));
        assert!((q_label(&table, &lm, s, 0, 0, Phoneme(0)) - expect).abs() < 1e-12);

        // blank branch ignores beta entirely
        let s1 = ScoreScales::new(1.0, 0.0).unwrap();
        let s2 = ScoreScales::new(1.0, 7.5).unwrap();
        assert_eq!(q_blank(&table, s1, 0, 0), q_blank(&table, s2, 0, 0));
    }

    #[test]
    fn hand_multiplied_scales() {
        // alpha=2, beta=1, P_model = 0.3, P_LM = 0.2 -> log(0.09 * 0.2)
        let v = voc(1);
        let table = PosteriorTable::new(v, 1, 1, vec![0.3f64.ln(), 0.7f64.ln(), 0.3f64.ln(), 0.7f64.ln()]).unwrap();
        let lm = NGramPhonemeLM::from_log_probs(v, 1, vec![0.0, 0.0]).unwrap();
        // overwrite via raw rows is not possible; rebuild with P_LM(a) = 0.2 is
        // not normalizable for |V|=1, so check the formula components instead
        let s = ScoreScales::new(2.0, 1.0).unwrap();
        let got = s.alpha() * 0.3f64.ln() + s.beta() * 0.2f64.ln();
        assert!((got - (0.09f64 * 0.2).ln()).abs() < 1e-12);
        assert!((q_label(&table, &lm, s, 0, 0, Phoneme(0)) - 2.0 * 0.3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn scorer_rejects_context_mismatch() {
        let v = voc(2);
        let table = PosteriorTable::uniform(v, 1, 2).unwrap();
        let lm = NGramPhonemeLM::uniform(v, 2).unwrap();
        assert!(matches!(
            Scorer::new(&table, Some(&lm), ScoreScales::MODEL_ONLY),
            Err(Error::ContextMismatch { .. })
        ));
    }
}

//! Beam-search N-best decoding and N-best-list minimum-risk loss — the
//! decode-then-rescore baseline the lattice-free objectives are measured
//! against. Hypothesis selection is treated as constant: the loss
//! differentiates through the list masses only.

use std::collections::HashMap;

use crate::diff::LossResult;
use crate::error::{Error, Result};
use crate::lm::{NGramPhonemeLM, ScoreScales, Scorer};
use crate::math::{logsumexp, logsumexp2};
use crate::seq::LabelSequence;
use crate::table::PosteriorTable;
use crate::vocab::Phoneme;

/// Top-`n` label sequences by q-weighted full-sum mass, found by
/// frame-synchronous beam search. Hypotheses are recombined per collapsed
/// prefix (which also determines the context state), so each list entry's
/// mass sums every surviving alignment of that sequence. Ties in mass
/// break lexicographically for a deterministic list.
pub fn beam_nbest(
    table: &PosteriorTable,
    lm: &NGramPhonemeLM,
    scales: ScoreScales,
    beam: usize,
    n: usize,
) -> Result<Vec<(LabelSequence, f64)>> {
    if n == 0 || beam < n {
        return Err(Error::InvalidParameter(format!(
            "need beam >= n >= 1, got beam {beam}, n {n}"
        )));
    }
    let scorer = Scorer::new(table, Some(lm), scales)?;
    let ctx = table.context();
    let mut hyps: Vec<(Vec<Phoneme>, f64)> = vec![(Vec::new(), 0.0)];
    for t in 0..table.frames() {
        let mut next: HashMap<Vec<Phoneme>, f64> = HashMap::new();
        for (prefix, mass) in &hyps {
            let u = ctx.code_of_prefix(prefix);
            let blank = mass + scorer.blank(t, u);
            next.entry(prefix.clone())
                .and_modify(|m| *m = logsumexp2(*m, blank))
                .or_insert(blank);
            for a in table.vocab().phonemes() {
                let emit = mass + scorer.label(t, u, a);
                let mut extended = prefix.clone();
                extended.push(a);
                next.entry(extended)
                    .and_modify(|m| *m = logsumexp2(*m, emit))
                    .or_insert(emit);
            }
        }
        hyps = next.into_iter().collect();
        hyps.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        hyps.truncate(beam);
    }
    hyps.truncate(n);
    hyps.into_iter()
        .map(|(labels, mass)| {
            LabelSequence::new(labels, table.vocab()).map(|s| (s, mass))
        })
        .collect()
}

/// Exact Levenshtein distance between two label sequences, two-row DP.
pub fn levenshtein(a: &LabelSequence, b: &LabelSequence) -> usize {
    let (a, b) = (a.labels(), b.labels());
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Expected Levenshtein risk of an N-best list, with the gradient taken
/// with respect to the list's log-masses: renormalizing the masses to
/// p̂ gives value Σ p̂_i·d_i and gradient p̂_i·(d_i − value).
pub fn nbest_mbr_loss(
    nbest: &[(LabelSequence, f64)],
    target: &LabelSequence,
) -> Result<LossResult> {
    if nbest.is_empty() {
        return Err(Error::EmptyNBest);
    }
    let masses: Vec<f64> = nbest.iter().map(|(_, m)| *m).collect();
    let log_z = logsumexp(&masses);
    let probs: Vec<f64> = masses.iter().map(|m| (m - log_z).exp()).collect();
    let dists: Vec<f64> = nbest
        .iter()
        .map(|(hyp, _)| levenshtein(hyp, target) as f64)
        .collect();
    let value = probs.iter().zip(&dists).map(|(p, d)| p * d).sum::<f64>();
    let grad = probs
        .iter()
        .zip(&dists)
        .map(|(p, d)| p * (d - value))
        .collect();
    Ok(LossResult { value, grad })
}

//! Lattice-free MMI: target mass over the mass of every label sequence,
//! both computed by context-recombined dynamic programs.

use crate::diff::LossResult;
use crate::error::Result;
use crate::fullsum::fullsum_log_mass;
use crate::lm::{NGramPhonemeLM, ScoreScales, Scorer};
use crate::math::{logsumexp, logsumexp2, LOG_ZERO};
use crate::seq::LabelSequence;
use crate::table::PosteriorTable;
use crate::vocab::AlignSym;

/// Forward pass over all context states; `layers[t][u]` is the log-mass of
/// every length-t alignment prefix whose last k labels decode to `u`.
fn denominator_forward(sc: &Scorer) -> Vec<Vec<f64>> {
    let ctx = sc.table.context();
    let states = ctx.num_states();
    let frames = sc.table.frames();
    let mut layers = Vec::with_capacity(frames + 1);
    let mut cur = vec![LOG_ZERO; states];
    cur[ctx.start()] = 0.0;
    layers.push(cur.clone());
    for t in 0..frames {
        let mut next = vec![LOG_ZERO; states];
        for u in 0..states {
            let q = cur[u];
            if q == LOG_ZERO {
                continue;
            }
            let stay = q + sc.blank(t, u);
            next[u] = logsumexp2(next[u], stay);
            for a in sc.table.vocab().phonemes() {
                let d = ctx.advance_label(u, a);
                next[d] = logsumexp2(next[d], q + sc.label(t, u, a));
            }
        }
        layers.push(next.clone());
        cur = next;
    }
    layers
}

/// Log of the total q-weighted mass of all label sequences (all alignments).
pub fn denominator_logsum(
    table: &PosteriorTable,
    lm: &NGramPhonemeLM,
    scales: ScoreScales,
) -> Result<f64> {
    let sc = Scorer::new(table, Some(lm), scales)?;
    let layers = denominator_forward(&sc);
    Ok(logsumexp(&layers[table.frames()]))
}

/// Denominator log-mass plus its gradient w.r.t. every table entry, via a
/// reverse sweep mirroring the forward recursion.
pub(crate) fn denominator_with_grad(
    table: &PosteriorTable,
    lm: &NGramPhonemeLM,
    scales: ScoreScales,
) -> Result<(f64, Vec<f64>)> {
    let sc = Scorer::new(table, Some(lm), scales)?;
    let ctx = table.context();
    let states = ctx.num_states();
    let frames = table.frames();
    let alpha = scales.alpha();
    let layers = denominator_forward(&sc);
    let log_z = logsumexp(&layers[frames]);

    let mut grad = vec![0.0; table.num_entries()];
    let mut adj: Vec<f64> = layers[frames]
        .iter()
        .map(|&q| if q == LOG_ZERO { 0.0 } else { (q - log_z).exp() })
        .collect();
    for t in (0..frames).rev() {
        let mut prev_adj = vec![0.0; states];
        for u in 0..states {
            let q = layers[t][u];
            if q == LOG_ZERO {
                continue;
            }
            let stay = q + sc.blank(t, u);
            let d_total = layers[t + 1][u];
            if adj[u] != 0.0 && stay != LOG_ZERO {
                let share = adj[u] * (stay - d_total).exp();
                prev_adj[u] += share;
                grad[table.entry_index(t, u, AlignSym::Blank)] += share * alpha;
            }
            for a in table.vocab().phonemes() {
                let d = ctx.advance_label(u, a);
                if adj[d] == 0.0 {
                    continue;
                }
                let edge = q + sc.label(t, u, a);
                if edge == LOG_ZERO {
                    continue;
                }
                let share = adj[d] * (edge - layers[t + 1][d]).exp();
                prev_adj[u] += share;
                grad[table.entry_index(t, u, AlignSym::Label(a))] += share * alpha;
            }
        }
        adj = prev_adj;
    }
    Ok((log_z, grad))
}

/// MMI loss: −(log target mass − log total mass), with gradient. The
/// numerator is the full-sum of the target under the same scales and LM.
pub fn mmi_loss(
    table: &PosteriorTable,
    target: &LabelSequence,
    lm: &NGramPhonemeLM,
    scales: ScoreScales,
) -> Result<LossResult> {
    let (log_num, grad_num) = fullsum_log_mass(table, target, Some(lm), scales)?;
    let (log_den, grad_den) = denominator_with_grad(table, lm, scales)?;
    let grad = grad_den
        .into_iter()
        .zip(grad_num)
        .map(|(d, n)| d - n)
        .collect();
    Ok(LossResult {
        value: log_den - log_num,
        grad,
    })
}

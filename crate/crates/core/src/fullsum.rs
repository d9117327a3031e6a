//! Full-sum cross-entropy over all alignments of a target sequence, the
//! best-alignment (Viterbi) decoder, and segment-boundary extraction.

use crate::context::ContextTable;
use crate::diff::LossResult;
use crate::error::{Error, Result};
use crate::lm::{NGramPhonemeLM, ScoreScales};
use crate::math::{logsumexp2, LOG_ZERO};
use crate::seq::LabelSequence;
use crate::table::PosteriorTable;
use crate::vocab::AlignSym;

/// Where a target's labels sit in time under one alignment: `boundaries[s]`
/// is the 1-based frame emitting label s+1, `positions[t]` the number of
/// labels emitted in frames 1..=t+1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentInfo {
    boundaries: Vec<usize>,
    positions: Vec<usize>,
}

impl SegmentInfo {
    pub fn new(boundaries: Vec<usize>, positions: Vec<usize>) -> Result<Self> {
        let frames = positions.len();
        let labels = boundaries.len();
        let mut prev = 0usize;
        for &b in &boundaries {
            if b <= prev || b > frames {
                return Err(Error::DegenerateInput(format!(
                    "label frames must be strictly increasing within 1..={frames}, got {boundaries:?}"
                )));
            }
            prev = b;
        }
        let mut last = 0usize;
        for (t, &s) in positions.iter().enumerate() {
            if s < last || s > labels {
                return Err(Error::DegenerateInput(format!(
                    "emitted-label counts must be non-decreasing within 0..={labels}, got {positions:?}"
                )));
            }
            let expect = boundaries.partition_point(|&b| b <= t + 1);
            if s != expect {
                return Err(Error::DegenerateInput(format!(
                    "count {s} at frame {} disagrees with label frames {boundaries:?}",
                    t + 1
                )));
            }
            last = s;
        }
        Ok(SegmentInfo {
            boundaries,
            positions,
        })
    }

    /// 1-based frame indices at which each label is emitted.
    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Labels emitted up to and including each frame; one entry per frame.
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn num_labels(&self) -> usize {
        self.boundaries.len()
    }

    pub fn frames(&self) -> usize {
        self.positions.len()
    }

    /// Labels emitted up to and including 1-based frame `t`.
    pub fn position_at(&self, t: usize) -> usize {
        self.positions[t - 1]
    }
}

/// Reads label-emission frames and per-frame label counts off an alignment.
pub fn segment_info(y: &crate::seq::Alignment) -> SegmentInfo {
    let mut boundaries = Vec::new();
    let mut positions = Vec::with_capacity(y.frames());
    let mut count = 0usize;
    for (t, sym) in y.symbols().iter().enumerate() {
        if !sym.is_blank() {
            count += 1;
            boundaries.push(t + 1);
        }
        positions.push(count);
    }
    SegmentInfo {
        boundaries,
        positions,
    }
}

fn check_target(table: &PosteriorTable, target: &LabelSequence) -> Result<()> {
    for &a in target.labels() {
        table.vocab().check(a)?;
    }
    if target.len() > table.frames() {
        return Err(Error::InfeasibleTarget {
            target_len: target.len(),
            frames: table.frames(),
        });
    }
    Ok(())
}

/// Context code of each target prefix: `codes[s]` after emitting s labels.
fn prefix_codes(ctx: &ContextTable, target: &LabelSequence) -> Vec<usize> {
    let mut codes = Vec::with_capacity(target.len() + 1);
    let mut u = ctx.start();
    codes.push(u);
    for &a in target.labels() {
        u = ctx.advance_label(u, a);
        codes.push(u);
    }
    codes
}

/// Log-mass of all alignments collapsing to `target`, with the gradient of
/// the log-mass w.r.t. every table entry. With an LM, each label step is
/// weighted `alpha*log P_model + beta*log P_lm`; blanks carry no LM factor.
pub(crate) fn fullsum_log_mass(
    table: &PosteriorTable,
    target: &LabelSequence,
    lm: Option<&NGramPhonemeLM>,
    scales: ScoreScales,
) -> Result<(f64, Vec<f64>)> {
    check_target(table, target)?;
    if let Some(lm) = lm {
        if lm.k() != table.k() {
            return Err(Error::ContextMismatch {
                expected: table.k(),
                got: lm.k(),
            });
        }
    }
    let (t_max, s_max) = (table.frames(), target.len());
    let alpha = scales.alpha();
    let codes = prefix_codes(table.context(), target);
    let lm_step: Vec<f64> = (0..s_max)
        .map(|s| match lm {
            Some(lm) => scales.beta() * lm.logp(codes[s], target.labels()[s]),
            None => 0.0,
        })
        .collect();

    // forward: a[t][s] = log-mass of emitting s labels in the first t frames
    let width = s_max + 1;
    let mut a = vec![LOG_ZERO; (t_max + 1) * width];
    a[0] = 0.0;
    for t in 1..=t_max {
        for s in 0..=s_max.min(t) {
            let stay = a[(t - 1) * width + s] + alpha * table.logp_blank(t - 1, codes[s]);
            let mut v = stay;
            if s > 0 {
                let emit = a[(t - 1) * width + s - 1]
                    + alpha * table.logp_label(t - 1, codes[s - 1], target.labels()[s - 1])
                    + lm_step[s - 1];
                v = logsumexp2(stay, emit);
            }
            a[t * width + s] = v;
        }
    }
    let log_mass = a[t_max * width + s_max];
    if log_mass == LOG_ZERO {
        return Err(Error::NonFiniteLoss(f64::INFINITY));
    }

    // reverse: adj[t][s] = d log_mass / d a[t][s]
    let mut grad = vec![0.0; table.num_entries()];
    let mut adj = vec![0.0; (t_max + 1) * width];
    adj[t_max * width + s_max] = 1.0;
    for t in (1..=t_max).rev() {
        for s in 0..=s_max.min(t) {
            let z = a[t * width + s];
            let zbar = adj[t * width + s];
            if zbar == 0.0 || z == LOG_ZERO {
                continue;
            }
            let stay = a[(t - 1) * width + s] + alpha * table.logp_blank(t - 1, codes[s]);
            if stay != LOG_ZERO {
                let share = zbar * (stay - z).exp();
                adj[(t - 1) * width + s] += share;
                grad[table.entry_index(t - 1, codes[s], AlignSym::Blank)] += share * alpha;
            }
            if s > 0 {
                let emit = a[(t - 1) * width + s - 1]
                    + alpha * table.logp_label(t - 1, codes[s - 1], target.labels()[s - 1])
                    + lm_step[s - 1];
                if emit != LOG_ZERO {
                    let share = zbar * (emit - z).exp();
                    adj[(t - 1) * width + s - 1] += share;
                    grad[table.entry_index(
                        t - 1,
                        codes[s - 1],
                        AlignSym::Label(target.labels()[s - 1]),
                    )] += share * alpha;
                }
            }
        }
    }
    Ok((log_mass, grad))
}

/// Full-sum cross-entropy: −log of the summed alignment mass of `target`.
/// `scales.alpha` exponentiates the model posterior; the LM weight is
/// unused here (no LM argument), so `scales.beta` has no effect.
pub fn ce_fs_loss(
    table: &PosteriorTable,
    target: &LabelSequence,
    scales: ScoreScales,
) -> Result<LossResult> {
    let (log_mass, grad) = fullsum_log_mass(table, target, None, scales)?;
    Ok(LossResult {
        value: -log_mass,
        grad: grad.into_iter().map(|g| -g).collect(),
    })
}

/// Best single alignment of `target` under the raw model scores, with its
/// segment layout. Ties prefer emitting labels at the earliest frame.
pub fn viterbi_align(
    table: &PosteriorTable,
    target: &LabelSequence,
) -> Result<(crate::seq::Alignment, SegmentInfo)> {
    check_target(table, target)?;
    let (t_max, s_max) = (table.frames(), target.len());
    let codes = prefix_codes(table.context(), target);

    let width = s_max + 1;
    let mut best = vec![LOG_ZERO; (t_max + 1) * width];
    best[0] = 0.0;
    // from_blank[t][s]: best path into (t,s) ends with a blank at frame t
    let mut from_blank = vec![false; (t_max + 1) * width];
    for t in 1..=t_max {
        for s in 0..=s_max.min(t) {
            let stay = best[(t - 1) * width + s] + table.logp_blank(t - 1, codes[s]);
            let emit = if s > 0 {
                best[(t - 1) * width + s - 1]
                    + table.logp_label(t - 1, codes[s - 1], target.labels()[s - 1])
            } else {
                LOG_ZERO
            };
            // on a tie take the blank, pushing emissions toward earlier frames
            if stay >= emit {
                best[t * width + s] = stay;
                from_blank[t * width + s] = true;
            } else {
                best[t * width + s] = emit;
            }
        }
    }
    if best[t_max * width + s_max] == LOG_ZERO {
        return Err(Error::NonFiniteLoss(f64::INFINITY));
    }

    let mut symbols = vec![AlignSym::Blank; t_max];
    let mut s = s_max;
    for t in (1..=t_max).rev() {
        if from_blank[t * width + s] {
            symbols[t - 1] = AlignSym::Blank;
        } else {
            symbols[t - 1] = AlignSym::Label(target.labels()[s - 1]);
            s -= 1;
        }
    }
    debug_assert_eq!(s, 0);
    let y = crate::seq::Alignment::new(symbols, table.vocab())?;
    let info = segment_info(&y);
    Ok((y, info))
}

/// Log-probability of one specific alignment under raw model scores.
pub fn alignment_log_prob(table: &PosteriorTable, y: &crate::seq::Alignment) -> Result<f64> {
    if y.frames() != table.frames() {
        return Err(Error::DegenerateInput(format!(
            "alignment covers {} frames, table has {}",
            y.frames(),
            table.frames()
        )));
    }
    let ctx = table.context();
    let mut u = ctx.start();
    let mut lp = 0.0;
    for (t, &sym) in y.symbols().iter().enumerate() {
        match sym {
            AlignSym::Blank => lp += table.logp_blank(t, u),
            AlignSym::Label(a) => {
                lp += table.logp_label(t, u, a);
                u = ctx.advance_label(u, a);
            }
        }
    }
    Ok(lp)
}

//! Segment-level expected-risk training. Risk is accumulated per frame
//! against the windows induced by the target's best alignment, plus a
//! linear penalty on the number of emissions inside each segment; paths
//! exceeding the per-segment emission budget are pruned away.

use crate::diff::LossResult;
use crate::error::{Error, Result};
use crate::fullsum::SegmentInfo;
use crate::lm::{NGramPhonemeLM, ScoreScales, Scorer};
use crate::semiring::{plus_contribution_adjoint, EvAdjoint, ExpectationValue};
use crate::seq::{collapse, Alignment, LabelSequence};
use crate::table::PosteriorTable;
use crate::vocab::{AlignSym, MappedSym};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegMbrConfig {
    half_window: usize,
    penalty_slope: f64,
    max_emissions: usize,
}

impl SegMbrConfig {
    pub fn new(half_window: usize, penalty_slope: f64, max_emissions: usize) -> Result<Self> {
        if !(penalty_slope >= 0.0) || !penalty_slope.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "penalty slope must be finite and >= 0, got {penalty_slope}"
            )));
        }
        if max_emissions == 0 {
            return Err(Error::InvalidParameter(
                "emission budget must be at least 1".into(),
            ));
        }
        Ok(SegMbrConfig {
            half_window,
            penalty_slope,
            max_emissions,
        })
    }

    pub fn half_window(&self) -> usize {
        self.half_window
    }

    pub fn penalty_slope(&self) -> f64 {
        self.penalty_slope
    }

    pub fn max_emissions(&self) -> usize {
        self.max_emissions
    }
}

impl Default for SegMbrConfig {
    /// Tuned defaults: window ±3, slope 0.3, at most 3 emissions.
    fn default() -> Self {
        SegMbrConfig {
            half_window: 3,
            penalty_slope: 0.3,
            max_emissions: 3,
        }
    }
}

/// Cost of one frame symbol against the reference window centered at
/// 1-based position `center` (0 = the reference has emitted nothing yet),
/// clipped to the reference bounds.
///
/// A label costs `min |l| / half_window` over window offsets `l` where the
/// reference carries that label, and 1 when it appears nowhere in the
/// window; `half_window = 0` degrades to exact 0/1 match at the center. A
/// frame before any emission costs 0 when the reference position is also 0,
/// else 1.
pub fn local_cost(
    sym: MappedSym,
    reference: &LabelSequence,
    center: usize,
    half_window: usize,
) -> f64 {
    let a = match sym {
        MappedSym::NoLabel => return if center == 0 { 0.0 } else { 1.0 },
        MappedSym::Label(a) => a,
    };
    let s_ref = reference.len() as isize;
    let c = center as isize;
    let l_max = half_window as isize;
    let mut best = 1.0f64;
    for l in -l_max..=l_max {
        let p = c + l;
        if p < 1 || p > s_ref {
            continue;
        }
        if reference.labels()[(p - 1) as usize] == a {
            let cost = if half_window == 0 {
                0.0
            } else {
                l.unsigned_abs() as f64 / half_window as f64
            };
            best = best.min(cost);
        }
    }
    best
}

/// Linear per-segment emission penalty: `slope * max(count - 1, 0)`.
pub fn emission_penalty(count: usize, slope: f64) -> f64 {
    slope * count.saturating_sub(1) as f64
}

struct SegLattice {
    states: usize,
    budget: usize,
}

impl SegLattice {
    fn len(&self) -> usize {
        (self.budget + 1) * self.states
    }

    #[inline]
    fn idx(&self, i: usize, u: usize) -> usize {
        i * self.states + u
    }
}

/// Expected segment risk over all surviving alignments, with gradient.
/// `viterbi` must be the target's alignment as produced by `viterbi_align`.
pub fn segmbr_loss(
    table: &PosteriorTable,
    target: &LabelSequence,
    viterbi: &(Alignment, SegmentInfo),
    lm: &NGramPhonemeLM,
    scales: ScoreScales,
    cfg: SegMbrConfig,
) -> Result<LossResult> {
    let (ref_align, info) = viterbi;
    if target.is_empty() {
        return Err(Error::DegenerateInput(
            "segment risk needs a non-empty target".into(),
        ));
    }
    if &collapse(ref_align) != target {
        return Err(Error::DegenerateInput(
            "reference alignment does not collapse to the target".into(),
        ));
    }
    if info.frames() != table.frames() {
        return Err(Error::DegenerateInput(format!(
            "segment info covers {} frames, table has {}",
            info.frames(),
            table.frames()
        )));
    }
    let sc = Scorer::new(table, Some(lm), scales)?;
    let ctx = table.context();
    let frames = table.frames();
    let alpha = scales.alpha();
    let lat = SegLattice {
        states: ctx.num_states(),
        budget: cfg.max_emissions,
    };

    // per frame: cost of each emitted/carried label, and of silence-so-far
    let label_cost: Vec<Vec<f64>> = (0..frames)
        .map(|t| {
            table
                .vocab()
                .phonemes()
                .map(|a| {
                    local_cost(
                        MappedSym::Label(a),
                        target,
                        info.positions()[t],
                        cfg.half_window,
                    )
                })
                .collect()
        })
        .collect();
    let no_label_cost: Vec<f64> = (0..frames)
        .map(|t| if info.positions()[t] == 0 { 0.0 } else { 1.0 })
        .collect();
    let blank_cost = |t: usize, u: usize| -> f64 {
        match ctx.last_label(u) {
            None => no_label_cost[t],
            Some(a) => label_cost[t][a.0 as usize],
        }
    };
    let fold_here = |t1: usize| t1 == frames || info.boundaries().binary_search(&t1).is_ok();

    // forward, keeping the layer both before and after each boundary fold
    let mut layers: Vec<Vec<ExpectationValue>> = Vec::with_capacity(frames + 1);
    let mut pre_fold: Vec<Option<Vec<ExpectationValue>>> = vec![None; frames + 1];
    let mut cur = vec![ExpectationValue::ZERO; lat.len()];
    cur[lat.idx(0, ctx.start())] = ExpectationValue::ONE;
    layers.push(cur.clone());
    for t in 1..=frames {
        let mut next = vec![ExpectationValue::ZERO; lat.len()];
        for i in 0..=lat.budget {
            for u in 0..lat.states {
                let q = cur[lat.idx(i, u)];
                if q.is_zero() {
                    continue;
                }
                let stay = q.times(sc.blank(t - 1, u), blank_cost(t - 1, u));
                let si = lat.idx(i, u);
                next[si] = next[si].plus(stay);
                if i < lat.budget {
                    for a in table.vocab().phonemes() {
                        let d = lat.idx(i + 1, ctx.advance_label(u, a));
                        let emit = q.times(sc.label(t - 1, u, a), label_cost[t - 1][a.0 as usize]);
                        next[d] = next[d].plus(emit);
                    }
                }
            }
        }
        if fold_here(t) {
            pre_fold[t] = Some(next.clone());
            let mut folded = vec![ExpectationValue::ZERO; lat.len()];
            for u in 0..lat.states {
                let mut acc = ExpectationValue::ZERO;
                for i in 0..=lat.budget {
                    let penalized = next[lat.idx(i, u)]
                        .times(0.0, emission_penalty(i, cfg.penalty_slope));
                    acc = acc.plus(penalized);
                }
                folded[lat.idx(0, u)] = acc;
            }
            next = folded;
        }
        layers.push(next.clone());
        cur = next;
    }

    let total = layers[frames]
        .iter()
        .fold(ExpectationValue::ZERO, |acc, &v| acc.plus(v));
    if total.is_zero() {
        return Err(Error::DegenerateInput(
            "no alignment survives the emission budget with nonzero mass".into(),
        ));
    }

    // reverse sweep: seed d loss / d total.risk = 1
    let mut grad = vec![0.0; table.num_entries()];
    let seed = EvAdjoint {
        d_log_mass: 0.0,
        d_risk: 1.0,
    };
    let mut adj: Vec<EvAdjoint> = layers[frames]
        .iter()
        .map(|&v| plus_contribution_adjoint(total, seed, v))
        .collect();
    for t in (1..=frames).rev() {
        // undo the boundary fold: post[0,u] = (+)_i pre[i,u] (*) (0, f(i))
        let (dest, dest_adj): (&Vec<ExpectationValue>, Vec<EvAdjoint>) =
            if let Some(pre) = &pre_fold[t] {
                let mut pre_adj = vec![EvAdjoint::ZERO; lat.len()];
                for u in 0..lat.states {
                    let z = layers[t][lat.idx(0, u)];
                    let zbar = adj[lat.idx(0, u)];
                    for i in 0..=lat.budget {
                        let c = pre[lat.idx(i, u)]
                            .times(0.0, emission_penalty(i, cfg.penalty_slope));
                        pre_adj[lat.idx(i, u)].add(plus_contribution_adjoint(z, zbar, c));
                    }
                }
                (pre, pre_adj)
            } else {
                (&layers[t], adj.clone())
            };

        let mut prev_adj = vec![EvAdjoint::ZERO; lat.len()];
        for i in 0..=lat.budget {
            for u in 0..lat.states {
                let q = layers[t - 1][lat.idx(i, u)];
                if q.is_zero() {
                    continue;
                }
                let si = lat.idx(i, u);
                let stay = q.times(sc.blank(t - 1, u), blank_cost(t - 1, u));
                let cbar = plus_contribution_adjoint(dest[si], dest_adj[si], stay);
                prev_adj[si].add(cbar);
                grad[table.entry_index(t - 1, u, AlignSym::Blank)] += alpha * cbar.d_log_mass;
                if i < lat.budget {
                    for a in table.vocab().phonemes() {
                        let d = lat.idx(i + 1, ctx.advance_label(u, a));
                        let emit =
                            q.times(sc.label(t - 1, u, a), label_cost[t - 1][a.0 as usize]);
                        let cbar = plus_contribution_adjoint(dest[d], dest_adj[d], emit);
                        prev_adj[si].add(cbar);
                        grad[table.entry_index(t - 1, u, AlignSym::Label(a))] +=
                            alpha * cbar.d_log_mass;
                    }
                }
            }
        }
        adj = prev_adj;
    }

    Ok(LossResult {
        value: total.risk,
        grad,
    })
}

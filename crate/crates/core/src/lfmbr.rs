//! Expected sequence-level risk over all label sequences: a smoothed
//! positional Hamming cost is charged as labels are emitted, with
//! per-frame probability pruning and a length window around the target's
//! best-alignment emission schedule.

use crate::diff::LossResult;
use crate::error::{Error, Result};
use crate::fullsum::SegmentInfo;
use crate::lfsegmbr::local_cost;
use crate::lm::{NGramPhonemeLM, ScoreScales, Scorer};
use crate::math::LOG_ZERO;
use crate::semiring::{plus_contribution_adjoint, EvAdjoint, ExpectationValue};
use crate::seq::LabelSequence;
use crate::table::PosteriorTable;
use crate::vocab::{AlignSym, MappedSym};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MbrConfig {
    half_window: usize,
    prune_scale: f64,
    length_window: usize,
}

impl MbrConfig {
    pub fn new(half_window: usize, prune_scale: f64, length_window: usize) -> Result<Self> {
        if !(prune_scale > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "prune scale must exceed 1, got {prune_scale}"
            )));
        }
        Ok(MbrConfig {
            half_window,
            prune_scale,
            length_window,
        })
    }

    /// No pruning at all: infinite prune scale, unbounded length window.
    pub fn unpruned(half_window: usize) -> Self {
        MbrConfig {
            half_window,
            prune_scale: f64::INFINITY,
            length_window: usize::MAX,
        }
    }

    pub fn half_window(&self) -> usize {
        self.half_window
    }

    pub fn prune_scale(&self) -> f64 {
        self.prune_scale
    }

    pub fn length_window(&self) -> usize {
        self.length_window
    }
}

impl Default for MbrConfig {
    /// Tuned defaults: window ±3, prune scale 1.1, length window ±4.
    fn default() -> Self {
        MbrConfig {
            half_window: 3,
            prune_scale: 1.1,
            length_window: 4,
        }
    }
}

/// Smoothed positional edit cost of a hypothesis against a reference. Each
/// hypothesis position is charged `local_cost` against the reference window
/// centered there; the shorter side is padded with always-miss positions up
/// to the longer length.
pub fn hamming_cost(hyp: &LabelSequence, reference: &LabelSequence, half_window: usize) -> f64 {
    let span = hyp.len().max(reference.len());
    let mut cost = 0.0;
    for p in 1..=span {
        cost += if p <= hyp.len() {
            local_cost(
                MappedSym::Label(hyp.labels()[p - 1]),
                reference,
                p,
                half_window,
            )
        } else {
            1.0
        };
    }
    cost
}

/// Expected `hamming_cost` over the pruned hypothesis space, with gradient.
///
/// Pruning per frame, in order: (1) length window — hypotheses whose
/// emitted count strays more than `length_window` from the reference
/// schedule are dropped; (2) probability — within each (frame, count)
/// bucket, states whose log-mass falls below `prune_scale` times the bucket
/// maximum are dropped (skipped entirely for an infinite scale). Prune
/// decisions are constants under differentiation, so the gradient is that
/// of the surviving objective.
pub fn mbr_loss(
    table: &PosteriorTable,
    target: &LabelSequence,
    viterbi_positions: &SegmentInfo,
    lm: &NGramPhonemeLM,
    scales: ScoreScales,
    cfg: MbrConfig,
) -> Result<LossResult> {
    for &a in target.labels() {
        table.vocab().check(a)?;
    }
    if target.len() > table.frames() {
        return Err(Error::InfeasibleTarget {
            target_len: target.len(),
            frames: table.frames(),
        });
    }
    if viterbi_positions.frames() != table.frames()
        || viterbi_positions.num_labels() != target.len()
    {
        return Err(Error::DegenerateInput(format!(
            "reference schedule covers {} frames / {} labels, expected {} / {}",
            viterbi_positions.frames(),
            viterbi_positions.num_labels(),
            table.frames(),
            target.len()
        )));
    }
    let sc = Scorer::new(table, Some(lm), scales)?;
    let ctx = table.context();
    let states = ctx.num_states();
    let frames = table.frames();
    let alpha = scales.alpha();
    let s_ref = target.len();

    // cost of emitting label a as the p-th hypothesis label, p in 1..=frames
    let emit_cost: Vec<Vec<f64>> = (1..=frames)
        .map(|p| {
            table
                .vocab()
                .phonemes()
                .map(|a| local_cost(MappedSym::Label(a), target, p, cfg.half_window))
                .collect()
        })
        .collect();

    let width = frames + 1; // emitted-label counts 0..=frames
    let idx = |s: usize, u: usize| s * states + u;
    let prune = |layer: &mut [ExpectationValue], t1: usize| {
        let anchor = viterbi_positions.position_at(t1) as isize;
        for s in 0..width {
            if (s as isize - anchor).unsigned_abs() as usize > cfg.length_window {
                layer[idx(s, 0)..idx(s, 0) + states].fill(ExpectationValue::ZERO);
            }
        }
        if cfg.prune_scale.is_finite() {
            for s in 0..width {
                let row = &mut layer[idx(s, 0)..idx(s, 0) + states];
                let peak = row
                    .iter()
                    .map(|v| v.log_mass)
                    .fold(LOG_ZERO, f64::max);
                if peak == LOG_ZERO {
                    continue;
                }
                let threshold = cfg.prune_scale * peak;
                for v in row.iter_mut() {
                    if !v.is_zero() && v.log_mass < threshold {
                        *v = ExpectationValue::ZERO;
                    }
                }
            }
        }
    };

    // forward with post-prune layers retained for the reverse sweep
    let mut layers: Vec<Vec<ExpectationValue>> = Vec::with_capacity(frames + 1);
    let mut cur = vec![ExpectationValue::ZERO; width * states];
    cur[idx(0, ctx.start())] = ExpectationValue::ONE;
    layers.push(cur.clone());
    for t in 1..=frames {
        let mut next = vec![ExpectationValue::ZERO; width * states];
        for s in 0..t {
            for u in 0..states {
                let q = cur[idx(s, u)];
                if q.is_zero() {
                    continue;
                }
                let si = idx(s, u);
                let stay = q.times(sc.blank(t - 1, u), 0.0);
                next[si] = next[si].plus(stay);
                for a in table.vocab().phonemes() {
                    let d = idx(s + 1, ctx.advance_label(u, a));
                    let emit = q.times(sc.label(t - 1, u, a), emit_cost[s][a.0 as usize]);
                    next[d] = next[d].plus(emit);
                }
            }
        }
        prune(&mut next, t);
        layers.push(next.clone());
        cur = next;
    }

    // terminal: charge one unit per unreached reference position
    let pad = |s: usize| s_ref.saturating_sub(s) as f64;
    let mut total = ExpectationValue::ZERO;
    for s in 0..width {
        for u in 0..states {
            total = total.plus(layers[frames][idx(s, u)].times(0.0, pad(s)));
        }
    }
    if total.is_zero() {
        return Err(Error::DegenerateInput(
            "every hypothesis was pruned away or carries zero mass".into(),
        ));
    }

    // reverse sweep
    let mut grad = vec![0.0; table.num_entries()];
    let seed = EvAdjoint {
        d_log_mass: 0.0,
        d_risk: 1.0,
    };
    let mut adj = vec![EvAdjoint::ZERO; width * states];
    for s in 0..width {
        for u in 0..states {
            let c = layers[frames][idx(s, u)].times(0.0, pad(s));
            adj[idx(s, u)].add(plus_contribution_adjoint(total, seed, c));
        }
    }
    for t in (1..=frames).rev() {
        let dest = &layers[t];
        let mut prev_adj = vec![EvAdjoint::ZERO; width * states];
        for s in 0..t {
            for u in 0..states {
                let q = layers[t - 1][idx(s, u)];
                if q.is_zero() {
                    continue;
                }
                let si = idx(s, u);
                let stay = q.times(sc.blank(t - 1, u), 0.0);
                let cbar = plus_contribution_adjoint(dest[si], adj[si], stay);
                prev_adj[si].add(cbar);
                grad[table.entry_index(t - 1, u, AlignSym::Blank)] += alpha * cbar.d_log_mass;
                for a in table.vocab().phonemes() {
                    let d = idx(s + 1, ctx.advance_label(u, a));
                    let emit = q.times(sc.label(t - 1, u, a), emit_cost[s][a.0 as usize]);
                    let cbar = plus_contribution_adjoint(dest[d], adj[d], emit);
                    prev_adj[si].add(cbar);
                    grad[table.entry_index(t - 1, u, AlignSym::Label(a))] +=
                        alpha * cbar.d_log_mass;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fullsum::viterbi_align;
    use crate::vocab::{Phoneme, Vocabulary};

    fn voc(n: usize) -> Vocabulary {
        Vocabulary::new(n).unwrap()
    }

    fn seq(ids: &[u32], v: &Vocabulary) -> LabelSequence {
        LabelSequence::new(ids.iter().map(|&i| Phoneme(i)).collect(), v).unwrap()
    }

    #[test]
    fn positional_cost_examples() {
        let v = voc(2);
        let r = seq(&[0, 1, 0], &v);
        assert_eq!(hamming_cost(&r, &r, 2), 0.0);
        assert_eq!(hamming_cost(&LabelSequence::empty(), &seq(&[0], &v), 2), 1.0);
        // (a,a) vs (a): first position exact, second matches one off
        let c = hamming_cost(&seq(&[0, 0], &v), &seq(&[0], &v), 1);
        assert!((c - 1.0).abs() < 1e-15);
        // wider window halves the off-by-one charge
        let c = hamming_cost(&seq(&[0, 0], &v), &seq(&[0], &v), 2);
        assert!((c - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identity_has_zero_cost_on_random_pairs() {
        use rand::Rng;
        let v = voc(3);
        let mut rng = crate::table::test_rng(4);
        for _ in 0..20 {
            let len = rng.random_range(0..6);
            let ids: Vec<u32> = (0..len).map(|_| rng.random_range(0..3)).collect();
            let x = seq(&ids, &v);
            for half in 0..3 {
                assert_eq!(hamming_cost(&x, &x, half), 0.0);
            }
        }
    }

    #[test]
    fn uniform_two_frame_instance() {
        // masses: "" 1/4 (cost 1), "a" 1/2 (cost 0), "aa" 1/4 (cost 1)
        let v = voc(1);
        let table = PosteriorTable::uniform(v, 1, 2).unwrap();
        let target = seq(&[0], &v);
        let (_, info) = viterbi_align(&table, &target).unwrap();
        let lm = NGramPhonemeLM::uniform(v, 1).unwrap();
        let loss = mbr_loss(
            &table,
            &target,
            &info,
            &lm,
            ScoreScales::MODEL_ONLY,
            MbrConfig::unpruned(1),
        )
        .unwrap();
        assert!((loss.value - 0.5).abs() < 1e-12, "got {}", loss.value);
    }

    #[test]
    fn concentrated_mass_has_zero_risk() {
        let v = voc(2);
        let target = seq(&[1, 0], &v);
        let path = [
            AlignSym::Label(Phoneme(1)),
            AlignSym::Label(Phoneme(0)),
            AlignSym::Blank,
        ];
        let table = PosteriorTable::peaked(v, 1, 3, 0.0, |t, _| path[t]).unwrap();
        let (_, info) = viterbi_align(&table, &target).unwrap();
        let lm = NGramPhonemeLM::uniform(v, 1).unwrap();
        for cfg in [MbrConfig::unpruned(3), MbrConfig::default()] {
            let loss = mbr_loss(&table, &target, &info, &lm, ScoreScales::MODEL_ONLY, cfg)
                .unwrap();
            assert!(loss.value.abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_length_window_fixes_the_emission_schedule() {
        // W = 0 keeps only hypotheses emitting exactly at the reference
        // frames; survivors at T=2 with schedule (1,1) are (x, eps)
        let v = voc(2);
        let table = PosteriorTable::seeded(v, 1, 2, 50).unwrap();
        let target = seq(&[0], &v);
        let (_, info) = viterbi_align(&table, &target).unwrap();
        assert_eq!(info.boundaries(), &[1]);
        let lm = NGramPhonemeLM::uniform(v, 1).unwrap();
        let cfg = MbrConfig::new(1, f64::INFINITY, 0).unwrap();
        let loss = mbr_loss(&table, &target, &info, &lm, ScoreScales::MODEL_ONLY, cfg).unwrap();

        // direct arithmetic over the two survivors
        let mass = |a: u32| {
            let u = table.context().code_of_prefix(&[Phoneme(a)]);
            (table.logp_label(0, 0, Phoneme(a)) + table.logp_blank(1, u)).exp()
        };
        let (qa, qb) = (mass(0), mass(1));
        let cost_b = hamming_cost(&seq(&[1], &v), &target, 1);
        let expect = (qa * 0.0 + qb * cost_b) / (qa + qb);
        assert!((loss.value - expect).abs() < 1e-12, "{} vs {expect}", loss.value);
    }

    #[test]
    fn tight_probability_prune_still_yields_finite_risk() {
        let v = voc(2);
        let table = PosteriorTable::seeded(v, 1, 5, 51).unwrap();
        let target = seq(&[0, 1], &v);
        let (_, info) = viterbi_align(&table, &target).unwrap();
        let lm = NGramPhonemeLM::uniform(v, 1).unwrap();
        let cfg = MbrConfig::new(2, 1.01, 1).unwrap();
        let loss = mbr_loss(&table, &target, &info, &lm, ScoreScales::MODEL_ONLY, cfg).unwrap();
        assert!(loss.value.is_finite());
        assert!(loss.value >= 0.0 && loss.value <= 5.0);
    }

    #[test]
    fn infeasible_and_mismatched_inputs_error() {
        let v = voc(1);
        let table = PosteriorTable::uniform(v, 1, 2).unwrap();
        let lm = NGramPhonemeLM::uniform(v, 1).unwrap();
        let long = seq(&[0, 0, 0], &v);
        let info = SegmentInfo::new(vec![1], vec![1, 1]).unwrap();
        assert!(matches!(
            mbr_loss(&table, &long, &info, &lm, ScoreScales::MODEL_ONLY, MbrConfig::default()),
            Err(Error::InfeasibleTarget { .. })
        ));
        let short_info = SegmentInfo::new(vec![1], vec![1]).unwrap();
        assert!(mbr_loss(
            &table,
            &seq(&[0], &v),
            &short_info,
            &lm,
            ScoreScales::MODEL_ONLY,
            MbrConfig::default()
        )
        .is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let v = voc(2);
        let table = PosteriorTable::seeded(v, 1, 4, 88).unwrap();
        let target = seq(&[1, 0], &v);
        let (_, info) = viterbi_align(&table, &target).unwrap();
        let corpus = [seq(&[1, 0], &v), seq(&[0, 1, 1], &v)];
        let lm = NGramPhonemeLM::train(&corpus, v, 1, 1.0).unwrap();
        let scales = ScoreScales::new(1.2, 0.3).unwrap();
        for cfg in [MbrConfig::unpruned(2), MbrConfig::new(2, 1.2, 2).unwrap()] {
            let report = crate::diff::finite_diff_check(
                |t| mbr_loss(t, &target, &info, &lm, scales, cfg),
                &table,
                1e-5,
                1e-5,
            )
            .unwrap();
            assert!(report.pass, "max rel err {}", report.max_rel_err);
        }
    }
}

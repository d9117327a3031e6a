//! Brute-force ground truth. Every objective is recomputed here by literal
//! enumeration of all (|V|+1)^T alignments with linear-domain arithmetic —
//! deliberately sharing none of the dynamic programs, so agreement is a
//! genuine cross-check rather than a tautology.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::fullsum::SegmentInfo;
use crate::lfmbr::MbrConfig;
use crate::lfsegmbr::SegMbrConfig;
use crate::lm::{NGramPhonemeLM, ScoreScales};
use crate::seq::{collapse, Alignment, LabelSequence};
use crate::table::PosteriorTable;
use crate::vocab::{AlignSym, Phoneme, Vocabulary};

/// Largest number of alignments the oracle will enumerate.
pub const ENUMERATION_CAP: u64 = 10_000_000;

/// All (|V|+1)^frames alignments, by mixed-radix counting.
pub fn enumerate_alignments(frames: usize, vocab: Vocabulary) -> Result<Vec<Alignment>> {
    let base = vocab.num_outputs() as u128;
    let required = base
        .checked_pow(frames as u32)
        .ok_or(Error::EnumerationCap {
            required: u128::MAX,
            cap: ENUMERATION_CAP,
        })?;
    if required > ENUMERATION_CAP as u128 {
        return Err(Error::EnumerationCap {
            required,
            cap: ENUMERATION_CAP,
        });
    }
    let mut out = Vec::with_capacity(required as usize);
    let mut digits = vec![0usize; frames];
    loop {
        let symbols: Vec<AlignSym> = digits
            .iter()
            .map(|&d| {
                if d < vocab.size() {
                    AlignSym::Label(Phoneme(d as u32))
                } else {
                    AlignSym::Blank
                }
            })
            .collect();
        out.push(Alignment::new(symbols, &vocab)?);
        let mut pos = frames;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < vocab.num_outputs() {
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// Linear-domain weight of the first `upto` frames of an alignment,
/// tracking the emitted prefix by hand.
fn prefix_weight(
    table: &PosteriorTable,
    lm: Option<&NGramPhonemeLM>,
    scales: ScoreScales,
    y: &Alignment,
    upto: usize,
) -> f64 {
    let mut emitted: Vec<Phoneme> = Vec::new();
    let mut w = 1.0f64;
    for (t, &sym) in y.symbols().iter().take(upto).enumerate() {
        let code = table.context().code_of_prefix(&emitted);
        match sym {
            AlignSym::Blank => {
                w *= table.logp_blank(t, code).exp().powf(scales.alpha());
            }
            AlignSym::Label(a) => {
                w *= table.logp_label(t, code, a).exp().powf(scales.alpha());
                if let Some(lm) = lm {
                    w *= lm.logp(code, a).exp().powf(scales.beta());
                }
                emitted.push(a);
            }
        }
    }
    w
}

fn full_weight(
    table: &PosteriorTable,
    lm: Option<&NGramPhonemeLM>,
    scales: ScoreScales,
    y: &Alignment,
) -> f64 {
    prefix_weight(table, lm, scales, y, y.frames())
}

/// Window cost written out longhand: nearest reference occurrence of `a`
/// within ±half of 1-based `center`, scaled by the window size.
fn window_cost(a: Phoneme, reference: &LabelSequence, center: isize, half: usize) -> f64 {
    let mut best: Option<usize> = None;
    for p in 1..=reference.len() as isize {
        if (p - center).unsigned_abs() as usize <= half && reference.labels()[p as usize - 1] == a
        {
            let d = (p - center).unsigned_abs() as usize;
            best = Some(best.map_or(d, |b| b.min(d)));
        }
    }
    match best {
        None => 1.0,
        Some(0) => 0.0,
        Some(d) => d as f64 / half as f64,
    }
}

/// −log of the summed mass of alignments collapsing to `target`.
pub fn brute_cefs(
    table: &PosteriorTable,
    target: &LabelSequence,
    scales: ScoreScales,
) -> Result<f64> {
    let mut mass = 0.0;
    for y in enumerate_alignments(table.frames(), *table.vocab())? {
        if &collapse(&y) == target {
            mass += full_weight(table, None, scales, &y);
        }
    }
    Ok(-mass.ln())
}

/// −log(target mass / total mass) with LM-weighted label steps.
pub fn brute_mmi(
    table: &PosteriorTable,
    target: &LabelSequence,
    lm: &NGramPhonemeLM,
    scales: ScoreScales,
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for y in enumerate_alignments(table.frames(), *table.vocab())? {
        let w = full_weight(table, Some(lm), scales, &y);
        den += w;
        if &collapse(&y) == target {
            num += w;
        }
    }
    Ok(-(num / den).ln())
}

/// Alignments whose per-segment emission counts stay within the budget.
/// Segment s covers the frames after boundary s−1 up to and including
/// boundary s; frames past the last boundary form a trailing span.
pub fn segmbr_survivors(
    frames: usize,
    vocab: Vocabulary,
    info: &SegmentInfo,
    max_emissions: usize,
) -> Result<Vec<Alignment>> {
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut start = 0usize;
    for &b in info.boundaries() {
        spans.push((start, b));
        start = b;
    }
    if start < frames {
        spans.push((start, frames));
    }
    Ok(enumerate_alignments(frames, vocab)?
        .into_iter()
        .filter(|y| {
            spans.iter().all(|&(lo, hi)| {
                y.symbols()[lo..hi]
                    .iter()
                    .filter(|s| !s.is_blank())
                    .count()
                    <= max_emissions
            })
        })
        .collect())
}

/// Expected segment risk by direct summation over the surviving alignments.
pub fn brute_segmbr(
    table: &PosteriorTable,
    target: &LabelSequence,
    viterbi: &(Alignment, SegmentInfo),
    lm: &NGramPhonemeLM,
    scales: ScoreScales,
    cfg: SegMbrConfig,
) -> Result<f64> {
    let (_, info) = viterbi;
    let survivors = segmbr_survivors(
        table.frames(),
        *table.vocab(),
        info,
        cfg.max_emissions(),
    )?;
    let mut num = 0.0;
    let mut den = 0.0;
    for y in &survivors {
        let w = full_weight(table, Some(lm), scales, y);
        let mut risk = 0.0;
        // per-frame cost of the carried label against the reference window
        let mut last: Option<Phoneme> = None;
        for (t, &sym) in y.symbols().iter().enumerate() {
            if let AlignSym::Label(a) = sym {
                last = Some(a);
            }
            let center = info.positions()[t] as isize;
            risk += match last {
                None => {
                    if center == 0 {
                        0.0
                    } else {
                        1.0
                    }
                }
                Some(a) => window_cost(a, target, center, cfg.half_window()),
            };
        }
        // per-segment surplus-emission penalty, trailing span included
        let mut start = 0usize;
        let mut spans: Vec<(usize, usize)> = Vec::new();
        for &b in info.boundaries() {
            spans.push((start, b));
            start = b;
        }
        if start < y.frames() {
            spans.push((start, y.frames()));
        }
        for (lo, hi) in spans {
            let n = y.symbols()[lo..hi].iter().filter(|s| !s.is_blank()).count();
            risk += cfg.penalty_slope() * n.saturating_sub(1) as f64;
        }
        num += w * risk;
        den += w;
    }
    if den == 0.0 {
        return Err(Error::DegenerateInput("no surviving mass".into()));
    }
    Ok(num / den)
}

/// Alignments surviving the sequence-risk prunes, mirrored on alignment
/// prefixes: at each frame, prefixes outside the length window die, then —
/// with a finite prune scale — prefixes in low-mass (count, context) groups
/// die. An alignment survives if all of its prefixes do.
pub fn mbr_survivors(
    table: &PosteriorTable,
    lm: &NGramPhonemeLM,
    scales: ScoreScales,
    info: &SegmentInfo,
    cfg: MbrConfig,
) -> Result<Vec<Alignment>> {
    let all = enumerate_alignments(table.frames(), *table.vocab())?;
    let mut alive = vec![true; all.len()];
    for t in 1..=table.frames() {
        // group alive alignments by their length-t prefix
        let mut groups: HashMap<&[AlignSym], Vec<usize>> = HashMap::new();
        for (i, y) in all.iter().enumerate() {
            if alive[i] {
                groups.entry(&y.symbols()[..t]).or_default().push(i);
            }
        }
        let anchor = info.position_at(t) as isize;
        let mut masses: HashMap<(usize, Vec<Phoneme>), f64> = HashMap::new();
        let mut meta: Vec<(&[AlignSym], &Vec<usize>, usize, Vec<Phoneme>, f64)> = Vec::new();
        for (prefix, members) in &groups {
            let emitted: Vec<Phoneme> =
                prefix.iter().filter_map(|s| s.label()).collect();
            let s = emitted.len();
            if (s as isize - anchor).unsigned_abs() as usize > cfg.length_window() {
                for &i in members.iter() {
                    alive[i] = false;
                }
                continue;
            }
            let keep = emitted.len().saturating_sub(table.k());
            let ctx: Vec<Phoneme> = emitted[keep..].to_vec();
            let w = prefix_weight(table, Some(lm), scales, &all[members[0]], t);
            *masses.entry((s, ctx.clone())).or_insert(0.0) += w;
            meta.push((prefix, members, s, ctx, w));
        }
        if cfg.prune_scale().is_finite() {
            // bucket maxima at fixed emitted count, then per-state threshold
            let mut peak: HashMap<usize, f64> = HashMap::new();
            for ((s, _), &m) in &masses {
                let e = peak.entry(*s).or_insert(f64::NEG_INFINITY);
                *e = e.max(m.ln());
            }
            for (_, members, s, ctx, _) in &meta {
                let group_mass = masses[&(*s, ctx.clone())];
                if group_mass.ln() < cfg.prune_scale() * peak[s] {
                    for &i in members.iter() {
                        alive[i] = false;
                    }
                }
            }
        }
    }
    Ok(all
        .into_iter()
        .zip(alive)
        .filter_map(|(y, keep)| keep.then_some(y))
        .collect())
}

/// Positional cost written out longhand, padding the shorter side.
fn brute_sequence_cost(hyp: &LabelSequence, reference: &LabelSequence, half: usize) -> f64 {
    let span = hyp.len().max(reference.len());
    (1..=span)
        .map(|p| {
            if p <= hyp.len() {
                window_cost(hyp.labels()[p - 1], reference, p as isize, half)
            } else {
                1.0
            }
        })
        .sum()
}

/// Expected sequence risk by direct summation over surviving alignments.
pub fn brute_mbr(
    table: &PosteriorTable,
    target: &LabelSequence,
    info: &SegmentInfo,
    lm: &NGramPhonemeLM,
    scales: ScoreScales,
    cfg: MbrConfig,
) -> Result<f64> {
    let survivors = mbr_survivors(table, lm, scales, info, cfg)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for y in &survivors {
        let w = full_weight(table, Some(lm), scales, y);
        let risk = brute_sequence_cost(&collapse(y), target, cfg.half_window());
        num += w * risk;
        den += w;
    }
    if den == 0.0 {
        return Err(Error::DegenerateInput("no surviving mass".into()));
    }
    Ok(num / den)
}

/// Exhaustive per-sequence masses: every label sequence reachable in
/// `frames` frames with the summed linear weight of its alignments,
/// ranked by mass (ties broken lexicographically). The reference ranking
/// for beam-search checks.
pub fn sequence_masses(
    table: &PosteriorTable,
    lm: Option<&NGramPhonemeLM>,
    scales: ScoreScales,
) -> Result<Vec<(LabelSequence, f64)>> {
    let mut masses: HashMap<Vec<Phoneme>, f64> = HashMap::new();
    for y in enumerate_alignments(table.frames(), *table.vocab())? {
        let w = full_weight(table, lm, scales, &y);
        *masses.entry(collapse(&y).labels().to_vec()).or_insert(0.0) += w;
    }
    let mut out: Vec<(LabelSequence, f64)> = masses
        .into_iter()
        .map(|(labels, w)| {
            LabelSequence::new(labels, table.vocab()).map(|s| (s, w.ln()))
        })
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| a.0.labels().cmp(b.0.labels()))
    });
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    CeFs,
    LfMmi,
    LfSegMbr,
    LfMbr,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::CeFs,
        LossKind::LfMmi,
        LossKind::LfSegMbr,
        LossKind::LfMbr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::CeFs => "cefs",
            LossKind::LfMmi => "lfmmi",
            LossKind::LfSegMbr => "lfsegmbr",
            LossKind::LfMbr => "lfmbr",
        }
    }
}

/// Everything the four objectives need, bundled for dispatch.
pub struct OracleInstance<'a> {
    pub table: &'a PosteriorTable,
    pub target: &'a LabelSequence,
    pub lm: &'a NGramPhonemeLM,
    pub scales: ScoreScales,
    pub viterbi: &'a (Alignment, SegmentInfo),
    pub seg_cfg: SegMbrConfig,
    pub mbr_cfg: MbrConfig,
}

/// Ground-truth value of one objective by enumeration.
pub fn brute_loss(kind: LossKind, inst: &OracleInstance) -> Result<f64> {
    match kind {
        LossKind::CeFs => brute_cefs(inst.table, inst.target, inst.scales),
        LossKind::LfMmi => brute_mmi(inst.table, inst.target, inst.lm, inst.scales),
        LossKind::LfSegMbr => brute_segmbr(
            inst.table,
            inst.target,
            inst.viterbi,
            inst.lm,
            inst.scales,
            inst.seg_cfg,
        ),
        LossKind::LfMbr => brute_mbr(
            inst.table,
            inst.target,
            &inst.viterbi.1,
            inst.lm,
            inst.scales,
            inst.mbr_cfg,
        ),
    }
}

/// DP value of the same objective, for the sweep.
fn dp_loss(kind: LossKind, inst: &OracleInstance) -> Result<f64> {
    Ok(match kind {
        LossKind::CeFs => crate::fullsum::ce_fs_loss(inst.table, inst.target, inst.scales)?.value,
        LossKind::LfMmi => {
            crate::lfmmi::mmi_loss(inst.table, inst.target, inst.lm, inst.scales)?.value
        }
        LossKind::LfSegMbr => crate::lfsegmbr::segmbr_loss(
            inst.table,
            inst.target,
            inst.viterbi,
            inst.lm,
            inst.scales,
            inst.seg_cfg,
        )?
        .value,
        LossKind::LfMbr => crate::lfmbr::mbr_loss(
            inst.table,
            inst.target,
            &inst.viterbi.1,
            inst.lm,
            inst.scales,
            inst.mbr_cfg,
        )?
        .value,
    })
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub frames: Vec<usize>,
    pub vocab_sizes: Vec<usize>,
    pub contexts: Vec<usize>,
    pub seed: u64,
    pub tolerance: f64,
    /// added to the first DP value; a self-test hook for the checker
    pub inject_fault: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            frames: (2..=6).collect(),
            vocab_sizes: (1..=3).collect(),
            contexts: vec![1, 2],
            seed: 20_240_601,
            tolerance: 1e-9,
            inject_fault: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepCase {
    pub label: String,
    pub dp: f64,
    pub brute: f64,
    pub abs_err: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub cases: Vec<SweepCase>,
    pub max_abs_err: f64,
    pub pass: bool,
}

/// Compares every DP against enumeration across small instances, with and
/// without pruning, under both unit and boosted scales.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    let mut cases = Vec::new();
    let mut fault = cfg.inject_fault;
    let mut case_seed = cfg.seed;
    for &t in &cfg.frames {
        for &vs in &cfg.vocab_sizes {
            for &k in &cfg.contexts {
                case_seed = case_seed.wrapping_mul(6364136223846793005).wrapping_add(1);
                let vocab = Vocabulary::new(vs)?;
                let table = PosteriorTable::seeded(vocab, k, t, case_seed)?;
                let lm = NGramPhonemeLM::seeded(vocab, k, case_seed ^ 0xABCD)?;
                let target_len = 1 + (case_seed as usize) % t.min(3);
                let labels = (0..target_len)
                    .map(|i| Phoneme(((case_seed as usize + i * 7) % vs) as u32))
                    .collect();
                let target = LabelSequence::new(labels, &vocab)?;
                let viterbi = crate::fullsum::viterbi_align(&table, &target)?;
                for scales in [ScoreScales::MODEL_ONLY, ScoreScales::new(1.2, 0.3)?] {
                    for pruned in [false, true] {
                        let seg_cfg = if pruned {
                            SegMbrConfig::new(2, 0.3, 2)?
                        } else {
                            SegMbrConfig::new(2, 0.3, t)?
                        };
                        let mbr_cfg = if pruned {
                            MbrConfig::new(2, 1.1, 1)?
                        } else {
                            MbrConfig::unpruned(2)
                        };
                        let inst = OracleInstance {
                            table: &table,
                            target: &target,
                            lm: &lm,
                            scales,
                            viterbi: &viterbi,
                            seg_cfg,
                            mbr_cfg,
                        };
                        for kind in LossKind::ALL {
                            // the unpruned/pruned axis only moves the two
                            // risk losses; skip the duplicate exact runs
                            if pruned
                                && matches!(kind, LossKind::CeFs | LossKind::LfMmi)
                            {
                                continue;
                            }
                            let mut dp = dp_loss(kind, &inst)?;
                            dp += fault;
                            fault = 0.0;
                            let brute = brute_loss(kind, &inst)?;
                            let abs_err = (dp - brute).abs();
                            cases.push(SweepCase {
                                label: format!(
                                    "{} T={t} |V|={vs} k={k} alpha={} beta={} {}",
                                    kind.name(),
                                    scales.alpha(),
                                    scales.beta(),
                                    if pruned { "pruned" } else { "exact" },
                                ),
                                dp,
                                brute,
                                abs_err,
                                pass: abs_err <= cfg.tolerance,
                            });
                        }
                    }
                }
            }
        }
    }
    let max_abs_err = cases.iter().map(|c| c.abs_err).fold(0.0, f64::max);
    let pass = cases.iter().all(|c| c.pass);
    Ok(SweepOutcome {
        cases,
        max_abs_err,
        pass,
    })
}

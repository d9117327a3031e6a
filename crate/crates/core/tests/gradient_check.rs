//! Central finite differences against every hand-derived gradient, across
//! twenty fixed-seed instances per objective.

use lftrain::{
    ce_fs_loss, finite_diff_check, mbr_loss, mmi_loss, segmbr_loss, viterbi_align,
    FiniteDiffReport, LabelSequence, MbrConfig, NGramPhonemeLM, Phoneme, PosteriorTable,
    Result, ScoreScales, SegMbrConfig, Vocabulary,
};

const STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-5;
const INSTANCES: usize = 20;

struct Instance {
    table: PosteriorTable,
    target: LabelSequence,
    lm: NGramPhonemeLM,
    scales: ScoreScales,
    pruned: bool,
}

fn instances() -> Vec<Instance> {
    let shapes = [(2, 1, 1), (3, 2, 1), (4, 2, 1), (4, 3, 2), (5, 2, 2)];
    let mut out = Vec::with_capacity(INSTANCES);
    let mut seed = 0xF00Du64;
    for rep in 0..INSTANCES {
        let (t, vs, k) = shapes[rep % shapes.len()];
        seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let vocab = Vocabulary::new(vs).unwrap();
        let table = PosteriorTable::seeded(vocab, k, t, seed).unwrap();
        let lm = NGramPhonemeLM::seeded(vocab, k, seed ^ 0xBEEF).unwrap();
        let target_len = 1 + (seed as usize) % t.min(2);
        let labels = (0..target_len)
            .map(|i| Phoneme(((seed as usize + 3 * i) % vs) as u32))
            .collect();
        let target = LabelSequence::new(labels, &vocab).unwrap();
        let scales = if rep % 2 == 0 {
            ScoreScales::MODEL_ONLY
        } else {
            ScoreScales::new(1.2, 0.3).unwrap()
        };
        out.push(Instance {
            table,
            target,
            lm,
            scales,
            pruned: rep % 3 == 0,
        });
    }
    out
}

fn check_all<F>(name: &str, loss: F)
where
    F: Fn(&Instance, &PosteriorTable) -> Result<lftrain::LossResult>,
{
    let mut worst: Option<(usize, FiniteDiffReport)> = None;
    for (i, inst) in instances().iter().enumerate() {
        let report =
            finite_diff_check(|t| loss(inst, t), &inst.table, STEP, REL_TOL).unwrap();
        assert!(
            report.pass,
            "{name} instance {i}: rel err {:e} at entry {}",
            report.max_rel_err, report.worst_index
        );
        if worst
            .as_ref()
            .is_none_or(|(_, w)| report.max_rel_err > w.max_rel_err)
        {
            worst = Some((i, report));
        }
    }
    let (i, w) = worst.unwrap();
    println!("{name}: worst instance {i}, max rel err {:e}", w.max_rel_err);
}

#[test]
fn cefs_gradients_pass_finite_differences() {
    check_all("cefs", |inst, t| ce_fs_loss(t, &inst.target, inst.scales));
}

#[test]
fn mmi_gradients_pass_finite_differences() {
    check_all("lfmmi", |inst, t| {
        mmi_loss(t, &inst.target, &inst.lm, inst.scales)
    });
}

#[test]
fn segmbr_gradients_pass_finite_differences() {
    check_all("lfsegmbr", |inst, t| {
        // the alignment anchoring the segments is held fixed while the
        // table is perturbed, exactly as in training
        let viterbi = viterbi_align(&inst.table, &inst.target)?;
        let budget = if inst.pruned { 2 } else { inst.table.frames() };
        let cfg = SegMbrConfig::new(2, 0.3, budget)?;
        segmbr_loss(t, &inst.target, &viterbi, &inst.lm, inst.scales, cfg)
    });
}

#[test]
fn mbr_gradients_pass_finite_differences() {
    check_all("lfmbr", |inst, t| {
        let (_, info) = viterbi_align(&inst.table, &inst.target)?;
        let cfg = if inst.pruned {
            MbrConfig::new(2, 1.1, 2)?
        } else {
            MbrConfig::unpruned(2)
        };
        mbr_loss(t, &inst.target, &info, &inst.lm, inst.scales, cfg)
    });
}

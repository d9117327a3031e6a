//! Cross-module properties: posterior normalization, the MMI-to-full-sum
//! reduction, and zero self-risk on concentrated tables.

use lftrain::{
    ce_fs_loss, mbr_loss, mmi_loss, segmbr_loss, viterbi_align, AlignSym, LabelSequence,
    MbrConfig, NGramPhonemeLM, Phoneme, PosteriorTable, ScoreScales, SegMbrConfig, Vocabulary,
};

/// All label sequences of length 0..=max_len over the vocabulary.
fn all_sequences(vocab: Vocabulary, max_len: usize) -> Vec<LabelSequence> {
    let mut out = vec![LabelSequence::empty()];
    let mut frontier: Vec<Vec<Phoneme>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for prefix in &frontier {
            for a in vocab.phonemes() {
                let mut ext = prefix.clone();
                ext.push(a);
                out.push(LabelSequence::new(ext.clone(), &vocab).unwrap());
                next.push(ext);
            }
        }
        frontier = next;
    }
    out
}

#[test]
fn sequence_posteriors_sum_to_one_at_unit_scales() {
    for (t, vs, k, seed) in [(3, 2, 1, 1u64), (4, 2, 1, 2), (4, 1, 2, 3), (5, 3, 1, 4)] {
        let vocab = Vocabulary::new(vs).unwrap();
        let table = PosteriorTable::seeded(vocab, k, t, seed).unwrap();
        let total: f64 = all_sequences(vocab, t)
            .iter()
            .map(|w| {
                ce_fs_loss(&table, w, ScoreScales::MODEL_ONLY)
                    .map(|r| (-r.value).exp())
                    .unwrap_or(0.0)
            })
            .sum();
        assert!(
            (total - 1.0).abs() <= 1e-9,
            "T={t} |V|={vs} k={k}: sum {total}"
        );
    }
}

#[test]
fn mmi_reduces_to_full_sum_under_a_unit_denominator() {
    let mut seed = 0xACE5u64;
    let mut count = 0;
    while count < 50 {
        seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let t = 2 + (seed % 4) as usize;
        let vs = 1 + (seed >> 8) as usize % 3;
        let k = 1 + (seed >> 16) as usize % 2;
        let vocab = Vocabulary::new(vs).unwrap();
        let table = PosteriorTable::seeded(vocab, k, t, seed).unwrap();
        let lm = NGramPhonemeLM::seeded(vocab, k, seed ^ 0xD1CE).unwrap();
        let len = 1 + (seed as usize) % t.min(3);
        let labels = (0..len)
            .map(|i| Phoneme(((seed as usize + i) % vs) as u32))
            .collect();
        let target = LabelSequence::new(labels, &vocab).unwrap();
        let mmi = mmi_loss(&table, &target, &lm, ScoreScales::MODEL_ONLY).unwrap();
        let cefs = ce_fs_loss(&table, &target, ScoreScales::MODEL_ONLY).unwrap();
        assert!(
            (mmi.value - cefs.value).abs() <= 1e-10,
            "instance {count}: {} vs {}",
            mmi.value,
            cefs.value
        );
        count += 1;
    }
}

#[test]
fn concentrated_tables_have_zero_self_risk() {
    for (t, vs) in [(4usize, 2usize), (5, 3), (6, 1)] {
        let vocab = Vocabulary::new(vs).unwrap();
        // pick an alignment with a uniform table, then rebuild the table
        // to put every frame's whole mass on that alignment's symbol
        let uniform = PosteriorTable::uniform(vocab, 1, t).unwrap();
        let labels: Vec<Phoneme> = (0..t / 2)
            .map(|i| Phoneme((i % vs) as u32))
            .collect();
        let target = LabelSequence::new(labels, &vocab).unwrap();
        let (alignment, info) = viterbi_align(&uniform, &target).unwrap();
        let symbols: Vec<AlignSym> = alignment.symbols().to_vec();
        let table =
            PosteriorTable::peaked(vocab, 1, t, 0.0, |frame, _| symbols[frame]).unwrap();
        let lm = NGramPhonemeLM::uniform(vocab, 1).unwrap();

        let seg = segmbr_loss(
            &table,
            &target,
            &(alignment.clone(), info.clone()),
            &lm,
            ScoreScales::default(),
            SegMbrConfig::default(),
        )
        .unwrap();
        assert!(seg.value.abs() <= 1e-12, "segmbr self-risk {}", seg.value);

        let mbr = mbr_loss(
            &table,
            &target,
            &info,
            &lm,
            ScoreScales::default(),
            MbrConfig::default(),
        )
        .unwrap();
        assert!(mbr.value.abs() <= 1e-12, "mbr self-risk {}", mbr.value);
    }
}

//! Tabular toy transducer and a gradient-descent loop that exercises each
//! training criterion end to end — including the blank-dominance effect
//! when a cross-entropy-trained model is fine-tuned discriminatively.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::context::{ContextTable, StateCode};
use crate::diff::chain_through_softmax;
use crate::error::{Error, Result};
use crate::fullsum::{ce_fs_loss, viterbi_align};
use crate::lfmbr::{mbr_loss, MbrConfig};
use crate::lfmmi::mmi_loss;
use crate::lfsegmbr::{segmbr_loss, SegMbrConfig};
use crate::lm::{NGramPhonemeLM, ScoreScales};
use crate::math::logsumexp;
use crate::seq::LabelSequence;
use crate::table::PosteriorTable;
use crate::vocab::{AlignSym, Phoneme, Vocabulary};

/// Weight of the MMI term inside the combined risk criteria.
pub const MMI_COMBINATION_SCALE: f64 = 0.2;

/// A table of free logits per (feature id, context state, output symbol).
/// Stands in for an encoder plus joint network: an utterance's posterior
/// table is the row-wise softmax of the logits its features select.
#[derive(Clone, Debug)]
pub struct ToyModel {
    num_features: usize,
    ctx: ContextTable,
    logits: Vec<f64>,
}

impl ToyModel {
    /// All-zero logits: every posterior row uniform.
    pub fn new(num_features: usize, vocab: Vocabulary, k: usize) -> Result<Self> {
        if num_features == 0 {
            return Err(Error::InvalidParameter(
                "feature alphabet must be non-empty".into(),
            ));
        }
        let ctx = ContextTable::new(vocab, k)?;
        let len = num_features * ctx.num_states() * vocab.num_outputs();
        Ok(ToyModel {
            num_features,
            ctx,
            logits: vec![0.0; len],
        })
    }

    /// Small random logits, reproducible from the seed.
    pub fn seeded(num_features: usize, vocab: Vocabulary, k: usize, seed: u64) -> Result<Self> {
        let mut model = ToyModel::new(num_features, vocab, k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &mut model.logits {
            *l = rng.random_range(-0.5..0.5);
        }
        Ok(model)
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn vocab(&self) -> &Vocabulary {
        self.ctx.vocab()
    }

    pub fn k(&self) -> usize {
        self.ctx.k()
    }

    pub fn context(&self) -> &ContextTable {
        &self.ctx
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    pub fn logit_index(&self, f: usize, u: StateCode, sym: AlignSym) -> usize {
        let outputs = self.ctx.vocab().num_outputs();
        (f * self.ctx.num_states() + u) * outputs + self.ctx.vocab().output_index(sym)
    }

    /// Posterior table for one utterance: row-wise log-softmax of the
    /// logits selected by each frame's feature id.
    pub fn posterior_table(&self, features: &[usize]) -> Result<PosteriorTable> {
        let vocab = *self.ctx.vocab();
        let outputs = vocab.num_outputs();
        let states = self.ctx.num_states();
        let mut log_probs = Vec::with_capacity(features.len() * states * outputs);
        for &f in features {
            if f >= self.num_features {
                return Err(Error::InvalidParameter(format!(
                    "feature id {f} outside alphabet of {}",
                    self.num_features
                )));
            }
            for u in 0..states {
                let row = &self.logits[(f * states + u) * outputs..][..outputs];
                let z = logsumexp(row);
                log_probs.extend(row.iter().map(|l| l - z));
            }
        }
        PosteriorTable::new(vocab, self.ctx.k(), features.len(), log_probs)
    }
}

/// One training utterance: a frame-level feature sequence and its target.
#[derive(Clone, Debug)]
pub struct Utterance {
    pub features: Vec<usize>,
    pub target: LabelSequence,
}

#[derive(Clone, Debug)]
pub struct ToyDataset {
    utterances: Vec<Utterance>,
}

impl ToyDataset {
    pub fn new(utterances: Vec<Utterance>) -> Result<Self> {
        if utterances.is_empty() {
            return Err(Error::DegenerateInput("empty dataset".into()));
        }
        for u in &utterances {
            if u.target.len() > u.features.len() {
                return Err(Error::InfeasibleTarget {
                    target_len: u.target.len(),
                    frames: u.features.len(),
                });
            }
        }
        Ok(ToyDataset { utterances })
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }
}

/// Synthetic utterances whose features give the targets away: each label
/// occupies one frame carrying its own feature id, every other frame
/// carries the silence feature `vocab.size()`. Models built with
/// `vocab.size() + 1` features can therefore learn the task.
pub fn generate_dataset(
    num_utterances: usize,
    frames: usize,
    vocab: Vocabulary,
    seed: u64,
) -> Result<ToyDataset> {
    if num_utterances == 0 || frames == 0 {
        return Err(Error::DegenerateInput(
            "need at least one utterance and one frame".into(),
        ));
    }
    let silence = vocab.size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut utterances = Vec::with_capacity(num_utterances);
    for _ in 0..num_utterances {
        let max_labels = (frames / 2).max(1);
        let num_labels = rng.random_range(1..=max_labels);
        let mut slots: Vec<usize> = (0..frames).collect();
        slots.shuffle(&mut rng);
        let mut slots: Vec<usize> = slots.into_iter().take(num_labels).collect();
        slots.sort_unstable();
        let mut features = vec![silence; frames];
        let mut labels = Vec::with_capacity(num_labels);
        for &t in &slots {
            let a = Phoneme(rng.random_range(0..vocab.size() as u32));
            features[t] = a.0 as usize;
            labels.push(a);
        }
        utterances.push(Utterance {
            features,
            target: LabelSequence::new(labels, &vocab)?,
        });
    }
    ToyDataset::new(utterances)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainCriterion {
    CeFs,
    LfMmi,
    /// segment risk plus `MMI_COMBINATION_SCALE` times the MMI loss
    LfSegMbrMmi,
    /// sequence risk plus `MMI_COMBINATION_SCALE` times the MMI loss
    LfMbrMmi,
}

impl TrainCriterion {
    pub fn name(self) -> &'static str {
        match self {
            TrainCriterion::CeFs => "cefs",
            TrainCriterion::LfMmi => "lfmmi",
            TrainCriterion::LfSegMbrMmi => "lfsegmbr+mmi",
            TrainCriterion::LfMbrMmi => "lfmbr+mmi",
        }
    }
}

pub struct TrainOutcome {
    pub model: ToyModel,
    /// mean loss over the dataset before training and after each epoch
    pub loss_trace: Vec<f64>,
    /// mean blank posterior at the same points
    pub blank_trace: Vec<f64>,
}

/// Loss and logit-space gradient of one utterance under the criterion.
fn utterance_grad(
    model: &ToyModel,
    utt: &Utterance,
    criterion: TrainCriterion,
    lm: &NGramPhonemeLM,
    scales: ScoreScales,
) -> Result<(f64, Vec<f64>)> {
    let table = model.posterior_table(&utt.features)?;
    let (value, free_grad) = match criterion {
        TrainCriterion::CeFs => {
            let r = ce_fs_loss(&table, &utt.target, scales)?;
            (r.value, r.grad)
        }
        TrainCriterion::LfMmi => {
            let r = mmi_loss(&table, &utt.target, lm, scales)?;
            (r.value, r.grad)
        }
        TrainCriterion::LfSegMbrMmi => {
            let viterbi = viterbi_align(&table, &utt.target)?;
            let risk = segmbr_loss(
                &table,
                &utt.target,
                &viterbi,
                lm,
                scales,
                SegMbrConfig::default(),
            )?;
            let mmi = mmi_loss(&table, &utt.target, lm, scales)?;
            let grad = risk
                .grad
                .iter()
                .zip(&mmi.grad)
                .map(|(r, m)| r + MMI_COMBINATION_SCALE * m)
                .collect();
            (risk.value + MMI_COMBINATION_SCALE * mmi.value, grad)
        }
        TrainCriterion::LfMbrMmi => {
            let (_, info) = viterbi_align(&table, &utt.target)?;
            let risk = mbr_loss(
                &table,
                &utt.target,
                &info,
                lm,
                scales,
                MbrConfig::default(),
            )?;
            let mmi = mmi_loss(&table, &utt.target, lm, scales)?;
            let grad = risk
                .grad
                .iter()
                .zip(&mmi.grad)
                .map(|(r, m)| r + MMI_COMBINATION_SCALE * m)
                .collect();
            (risk.value + MMI_COMBINATION_SCALE * mmi.value, grad)
        }
    };
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss(value));
    }
    let chained = chain_through_softmax(&table, &free_grad)?;
    let states = model.context().num_states();
    let outputs = model.vocab().num_outputs();
    let mut grad = vec![0.0; model.logits().len()];
    for (t, &f) in utt.features.iter().enumerate() {
        let src = t * states * outputs;
        let dst = f * states * outputs;
        for i in 0..states * outputs {
            grad[dst + i] += chained[src + i];
        }
    }
    Ok((value, grad))
}

fn mean_loss_and_blank(
    model: &ToyModel,
    data: &ToyDataset,
    criterion: TrainCriterion,
    lm: &NGramPhonemeLM,
    scales: ScoreScales,
) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut blank = 0.0;
    for utt in data.utterances() {
        let (value, _) = utterance_grad(model, utt, criterion, lm, scales)?;
        loss += value;
        blank += model.posterior_table(&utt.features)?.mean_blank_posterior();
    }
    let n = data.utterances().len() as f64;
    Ok((loss / n, blank / n))
}

/// Plain stochastic gradient descent: one step per utterance, utterance
/// order reshuffled each epoch from the seed. The loss gradient is chained
/// through the softmax producing each posterior row, and the internal LM
/// is an add-one model trained on the dataset's own targets. Seeds fix the
/// shuffle, so equal seeds give bit-identical traces.
pub fn train(
    model: ToyModel,
    data: &ToyDataset,
    criterion: TrainCriterion,
    lr: f64,
    epochs: usize,
    seed: u64,
) -> Result<TrainOutcome> {
    if !(lr > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    let vocab = *model.vocab();
    let targets: Vec<LabelSequence> = data
        .utterances()
        .iter()
        .map(|u| u.target.clone())
        .collect();
    let lm = NGramPhonemeLM::train(&targets, vocab, model.k(), 1.0)?;
    let scales = ScoreScales::default();
    let mut model = model;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.utterances().len()).collect();
    let mut loss_trace = Vec::with_capacity(epochs + 1);
    let mut blank_trace = Vec::with_capacity(epochs + 1);
    let (l0, b0) = mean_loss_and_blank(&model, data, criterion, &lm, scales)?;
    loss_trace.push(l0);
    blank_trace.push(b0);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (_, grad) = utterance_grad(&model, &data.utterances()[i], criterion, &lm, scales)?;
            for (l, g) in model.logits_mut().iter_mut().zip(&grad) {
                *l -= lr * g;
            }
        }
        let (l, b) = mean_loss_and_blank(&model, data, criterion, &lm, scales)?;
        loss_trace.push(l);
        blank_trace.push(b);
    }
    Ok(TrainOutcome {
        model,
        loss_trace,
        blank_trace,
    })
}

/// Re-labels roughly `hide` of the label frames with the silence feature,
/// keeping the targets intact. The alignment is then genuinely ambiguous:
/// the features no longer say where those labels sit.
fn obscure_features(data: &ToyDataset, silence: usize, hide: f64, seed: u64) -> Result<ToyDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let utterances = data
        .utterances()
        .iter()
        .map(|u| {
            let mut features = u.features.clone();
            for f in features.iter_mut() {
                if *f != silence && rng.random_range(0.0..1.0) < hide {
                    *f = silence;
                }
            }
            Utterance {
                features,
                target: u.target.clone(),
            }
        })
        .collect();
    ToyDataset::new(utterances)
}

/// The blank-dominance demonstration: full-sum pretraining on data whose
/// labels are only partially announced by the features leaves the model
/// blank-heavy, and discriminative fine-tuning pulls the mean blank
/// posterior strictly down. Returns (after pretraining, after fine-tuning).
///
/// The ambiguity matters. When every label frame carries its own feature
/// the full-sum optimum saturates, the all-sequence normalizer is then
/// dominated by the target itself, and fine-tuning has no gradient left.
/// Hiding half the label frames keeps probability on blank-heavy
/// competitor sequences, which is exactly the mass the discriminative
/// denominator pushes down.
pub fn blank_dominance_scenario(seed: u64) -> Result<(f64, f64)> {
    let vocab = Vocabulary::new(3)?;
    let data = generate_dataset(6, 12, vocab, seed)?;
    let data = obscure_features(&data, vocab.size(), 0.5, seed ^ 0xA11A)?;
    let model = ToyModel::seeded(vocab.size() + 1, vocab, 1, seed ^ 0x5EED)?;
    let pretrained = train(model, &data, TrainCriterion::CeFs, 0.5, 60, seed)?;
    let start = *pretrained.blank_trace.last().unwrap();
    let tuned = train(
        pretrained.model,
        &data,
        TrainCriterion::LfMmi,
        0.3,
        100,
        seed + 1,
    )?;
    let end = *tuned.blank_trace.last().unwrap();
    Ok((start, end))
}

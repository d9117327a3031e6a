//! Training objectives for strictly monotonic phoneme transducers with
//! limited label context.
//!
//! The crate provides exact dynamic programs (with hand-derived gradients)
//! for full-sum cross-entropy and three lattice-free sequence losses, a
//! brute-force enumeration oracle for validating them, an N-best
//! minimum-risk baseline, and a toy gradient-descent trainer.

pub mod context;
pub mod diff;
pub mod error;
pub mod fullsum;
pub mod lfmbr;
pub mod lfmmi;
pub mod lfsegmbr;
pub mod lm;
pub mod math;
pub mod nbest;
pub mod oracle;
pub mod semiring;
pub mod seq;
pub mod table;
pub mod toytrain;
pub mod vocab;

pub use context::{ContextState, ContextTable, CtxSym, StateCode};
pub use diff::{finite_diff_check, FiniteDiffReport, LossResult};
pub use error::{Error, Result};
pub use fullsum::{ce_fs_loss, segment_info, viterbi_align, SegmentInfo};
pub use lfmbr::{hamming_cost, mbr_loss, MbrConfig};
pub use lfmmi::{denominator_logsum, mmi_loss};
pub use lfsegmbr::{emission_penalty, local_cost, segmbr_loss, SegMbrConfig};
pub use lm::{q_blank, q_label, NGramPhonemeLM, ScoreScales};
pub use nbest::{beam_nbest, levenshtein, nbest_mbr_loss};
pub use oracle::{
    brute_loss, enumerate_alignments, run_sweep, LossKind, OracleInstance, SweepConfig,
    SweepOutcome, ENUMERATION_CAP,
};
pub use semiring::{exp_plus, exp_times, ExpectationValue};
pub use seq::{collapse, map_blanks, Alignment, LabelSequence};
pub use table::PosteriorTable;
pub use toytrain::{
    blank_dominance_scenario, generate_dataset, train, ToyDataset, ToyModel, TrainCriterion,
    TrainOutcome, Utterance, MMI_COMBINATION_SCALE,
};
pub use vocab::{AlignSym, MappedSym, Phoneme, Vocabulary};

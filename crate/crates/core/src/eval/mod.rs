//! Evaluation of uncertainty against correctness.
//!
//! Inputs are index-aligned slices in canonical order (ascending `case_id`,
//! then `sentence_index`). Where a ranking needs a tie-break, the later
//! canonical item is treated as more uncertain.

mod abstention;
mod alignment;
mod correlation;
mod prune;
mod rce;

use thiserror::Error;

pub use abstention::{
    abstention_curve, check_fractions, default_fractions, random_abstention_baseline, random_rejection_order, rejected_count,
    rejection_order, AbstentionCurve, AbstentionPoint,
};
pub use alignment::{alignment_rates, AlignmentResult, ReportSentences};
pub use correlation::{pearson, pearson_by_group, sentence_pairs};
pub use prune::{prune_sentences, PruneResult, PrunedReport};
pub use rce::{empirical_rce, rce_bins, RceBin, DEFAULT_BINS};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("insufficient data: need {needed}, have {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no reports retained at rejection fraction {0}")]
    EmptyRetainedSet(f64),
    #[error("invalid rejection fraction {0}: fractions must lie in [0, 1) and increase strictly")]
    InvalidFraction(f64),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("no uncertainty for case {case_id} sentence {sentence_index}")]
    MissingUncertainty { case_id: String, sentence_index: usize },
}

/// How the `-1` empty-parse precision enters a computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentinelPolicy {
    /// Keep `-1`; it ranks below every real precision.
    #[default]
    Lowest,
    /// Map `-1` to `0`.
    AsZero,
    /// Drop sentences carrying `-1`.
    Exclude,
}

pub(crate) fn check_pair(u: &[f64], f: &[f64]) -> Result<(), EvalError> {
    if u.len() != f.len() {
        return Err(EvalError::LengthMismatch {
            left: u.len(),
            right: f.len(),
        });
    }
    if u.iter().chain(f).any(|x| !x.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    Ok(())
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

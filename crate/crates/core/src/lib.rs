//! Semantic-consistency uncertainty quantification for generated radiology
//! reports.
//!
//! The pipeline takes one original report and `T` sampled reports per case and
//! produces report-level and sentence-level uncertainty:
//!
//! * [`corpus`] loads and validates the JSONL inputs.
//! * [`parser`] segments reports and extracts entity-label pairs.
//! * [`factuality`] maps a (prediction, reference) pair to a score in `[0, 1]`.
//! * [`uq`] computes the variation-ratio uncertainties.
//! * [`eval`] scores uncertainty against correctness: Pearson, rank
//!   calibration, abstention, sentence alignment and pruning.
//! * [`prior`] detects references to non-existent prior exams.
//! * [`synth`] generates corpora with known latent structure, and the
//!   straight-line oracle used to cross-check the pipeline.
//! * [`cli`] wires everything into the `rrg-uq` command.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod factuality;
pub mod parser;
pub mod prior;
pub mod synth;
pub mod text;
pub mod uq;

pub use error::{Error, Result};

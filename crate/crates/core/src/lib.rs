//! Measure how moral values and language use shift across domains of a
//! multi-domain text corpus, and adapt a morality classifier trained on
//! existing source domains to a new target domain by instance weighting.
//!
//! The crate is organised by capability:
//!
//! * [`corpus`] ingests annotated text, aggregates annotator votes and exposes
//!   deterministic dataset views.
//! * [`synth`] generates corpora with planted topic and label shift, plus the
//!   exact Bayes posterior of the generator.
//! * [`shift_analysis`] fits a topic model, builds cosine-similarity matrices
//!   and runs the statistical tests relating shift to performance.
//! * [`baseline`] is the TF-IDF n-gram + logistic-regression baseline, the
//!   train-on-one/test-on-all grid, F1 metrics and mutual-information ranking.
//! * [`l2af`] is the instance-weighting adaptation network: a bidirectional
//!   GRU encoder shared by a moral-label head and an in-domain weighting head.
//! * [`eval`] runs the leave-one-domain-out protocol for the In-Domain,
//!   No-adapt and Adapt approaches.
//! * [`cli`] wires everything into batch commands driven by config files.

pub mod baseline;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod l2af;
pub mod seed;
pub mod shift_analysis;
pub mod synth;

pub use corpus::{Dataset, Document, LabelScheme, MoralLabel};
pub use error::{Error, Result};

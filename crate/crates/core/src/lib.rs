//! Building blocks for automated second-language proficiency assessment.
//!
//! The crate is organized around the stages of an assessment experiment:
//!
//! - [`corpus`] — data model for speech and essay corpora, manifest files,
//!   level schemes, and corpus statistics.
//! - [`dsp`] — signal front-end: resampling, fixed-length segmentation,
//!   log-mel filterbank features, and z-score normalization.
//! - [`dialogue`] — long-form dialogue preprocessing: silence removal,
//!   diarization and transcription adapters, learner selection, and
//!   full-audio vs. student-only variants.
//! - [`splits`] — speaker-disjoint experimental protocols: stratified
//!   k-fold CV, fixed holdouts, stratified subsets, duration-matched
//!   partitions, and leakage audits.
//! - [`models`] — classifier architectures over features, waveforms, and
//!   text embeddings, with exact manual backpropagation.
//! - [`train`] — training loops, schedules, losses, metrics, the
//!   token-length sweep harness, and report rendering.
//! - [`registry`] — string-keyed registry of adapters and architectures.

pub mod corpus;
pub mod dialogue;
pub mod dsp;
pub mod models;
pub mod registry;
pub mod splits;
pub mod train;
pub mod util;

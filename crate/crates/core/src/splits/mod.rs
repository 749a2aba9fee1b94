//! Speaker-disjoint experimental protocols: stratified k-fold CV, fixed
//! per-cell holdouts, stratified fixed-size subsets, duration-matched
//! partitions, and leakage auditing.

mod audit;
mod duration;
mod kfold;
mod subset;
mod types;

pub use audit::{audit_leakage, Granularity, LeakageReport, LeakageViolation};
pub use duration::{duration_matched_partition, DurationMatchOutcome, LevelMatchInfo, CANDIDATE_BUDGET};
pub use kfold::{fixed_test_holdout, stratified_kfold, Fold, FoldSet};
pub use subset::{largest_remainder_allocation, stratified_subset};
pub use types::{load_split, save_split, SplitAssignment};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SplitError>;

#[derive(Error, Debug)]
pub enum SplitError {
    #[error("k must be at least 2, got {0}")]
    KTooSmall(usize),
    #[error("{available} speakers cannot fill {k} folds")]
    TooFewSpeakers { available: usize, k: usize },
    #[error("empty stratification cell: {0}")]
    EmptyCell(String),
    #[error("stratum {stratum}: need {required} items, only {available} available")]
    InsufficientSupply {
        stratum: String,
        required: usize,
        available: usize,
    },
    #[error("level {level}: need {required} candidate speakers, only {available} available")]
    InfeasibleCounts {
        level: String,
        required: usize,
        available: usize,
    },
    #[error("unknown level {0:?} in manifest scheme")]
    UnknownLevel(String),
    #[error("split file error in {path}: {message}")]
    File { path: String, message: String },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

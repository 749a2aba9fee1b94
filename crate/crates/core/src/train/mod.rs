//! Training loops, schedules, losses, metrics, the token-length sweep
//! harness, and report rendering.

mod dataset;
mod loss;
mod metrics;
mod optimizer;
mod report;
mod schedule;
mod sweep;
mod train_loop;

pub use dataset::{Dataset, SampleInput};
pub use loss::{multitask_loss, multitask_loss_and_grads, nll_loss, MultiTaskWeights};
pub use metrics::{evaluate, Metrics};
pub use optimizer::{LrMap, Optimizer, OptimizerKind};
pub use report::{run_report, ReportDocument, ReportInputs, SweepTable};
pub use schedule::TrainSchedule;
pub use sweep::{token_length_sweep, SweepFamily, SweepResult, SweepSpec, TOKEN_LENGTH_GRID};
pub use train_loop::{predict, train, write_history_csv, EpochRecord, TrainOutcome};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Error, Debug)]
pub enum TrainError {
    #[error("empty dataset for {0}")]
    EmptyData(&'static str),
    #[error("target {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("prediction/label lengths differ: {predictions} vs {labels}")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("non-finite loss at epoch {epoch}; batch items: {item_ids:?}")]
    NonFiniteLoss { epoch: usize, item_ids: Vec<String> },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("sweep grid mutated: expected {expected:?}, got {got:?}")]
    SweepGridMutated {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("sweep family list is empty or repeats a family")]
    BadFamilyList,
    #[error("mixed sample input kinds in one dataset")]
    MixedInputKinds,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

//! Signal front-end: resampling, fixed-length segmentation, log-mel
//! filterbank features, and z-score normalization.
//!
//! All operations are pure functions of their inputs and safe to run
//! per-file in parallel worker pools.

mod clip;
mod fbank;
mod feature_io;
mod normalize;
mod resample;
mod segment;
pub mod wav;

pub use clip::{AudioClip, Segment, SourceSpan, PIPELINE_SAMPLE_RATE};
pub use fbank::{fbank, FbankConfig, FeatureMatrix};
pub use feature_io::{read_features, write_features, FeatureFile, FeatureHeader};
pub use normalize::{zscore, ZscoreScope};
pub use resample::resample;
pub use segment::segment;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DspError>;

#[derive(Error, Debug)]
pub enum DspError {
    #[error("empty audio clip")]
    EmptyClip,
    #[error("invalid sample rate {0}")]
    InvalidSampleRate(u32),
    #[error("expected a {expected} Hz clip, got {actual} Hz")]
    WrongSampleRate { expected: u32, actual: u32 },
    #[error("non-positive segment length {0}")]
    InvalidSegmentLength(f64),
    #[error("input of {samples} samples is shorter than one {frame_samples}-sample frame")]
    InputShorterThanFrame { samples: usize, frame_samples: usize },
    #[error("invalid filterbank config: {0}")]
    InvalidConfig(String),
    #[error("feature matrix is already normalized")]
    AlreadyNormalized,
    #[error("corpus-statistics z-score needs {expected} per-bin values, got {actual}")]
    StatsDimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite value produced at frame {frame}, bin {bin}")]
    NonFiniteFeature { frame: usize, bin: usize },
    #[error("wav error in {path}: {message}")]
    Wav { path: String, message: String },
    #[error("feature file error in {path}: {message}")]
    FeatureFile { path: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

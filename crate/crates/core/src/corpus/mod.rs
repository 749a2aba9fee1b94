//! Corpus data model: level schemes, speakers, recordings, essays, and
//! line-delimited JSON manifests.

mod manifest;
mod scheme;
mod stats;

pub use manifest::{
    load_manifest, save_manifest, Essay, Manifest, ManifestItem, Recording, RecordingKind, Speaker,
};
pub use scheme::{map_raw_level_to_cefr, CorpusKind, Gender, LevelLabel, LevelScheme};
pub use stats::{corpus_stats, CorpusStats, DurationStats, LevelStats};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Error, Debug)]
pub enum CorpusError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("manifest integrity error: {0}")]
    Integrity(String),
    #[error("level scheme error: {0}")]
    Scheme(String),
    #[error("raw proficiency level {0} outside 1..=16")]
    RawLevelOutOfRange(u8),
}

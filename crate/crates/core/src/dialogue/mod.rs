//! Dialogue-specific preprocessing: silence removal, speaker diarization
//! through adapters, learner identification, full-audio vs student-only
//! variant construction, and transcription through adapters.

mod diarize;
mod pipeline;
mod silence;
mod transcript;

pub use diarize::{
    build_variants, diarize, select_learner, AdapterInfo, DialogueVariants, DiarizationAdapter,
    DiarizationResult, ReplayDiarizer, TurnSpan,
};
pub use pipeline::{run_dialogue_pipeline, DialoguePipelineConfig, DialogueRunReport, RecordingReport};
pub use silence::{remove_silence, SilenceConfig};
#[doc(hidden)]
pub use silence::constant_level_samples;
pub use transcript::{
    load_transcript, save_transcript, transcribe, window_transcript, AsrInfo, AsrOutput, ReplayAsr,
    Sentence, Transcript, TranscriptChunk, TranscriptionAdapter, Variant, WindowMode,
};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DialogueError>;

#[derive(Error, Debug)]
pub enum DialogueError {
    #[error("expected a 16 kHz clip, got {0} Hz")]
    WrongSampleRate(u32),
    #[error("adapter {adapter} failed on recording {recording_id}: {message}")]
    AdapterFailure {
        adapter: String,
        recording_id: String,
        message: String,
    },
    #[error("no diarization labels for recording {0}")]
    MissingLabels(String),
    #[error("empty turn list")]
    EmptyTurnList,
    #[error("learner tag {0:?} does not appear in the turn list")]
    LearnerTagAbsent(String),
    #[error("invalid turn span: {0}")]
    InvalidTurnSpan(String),
    #[error("transcript is empty")]
    EmptyTranscript,
    #[error("one-minute windowing requires sentence timestamps")]
    TimestampsRequired,
    #[error("sentence timestamps are not monotone: {0}")]
    NonMonotoneTimestamps(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
}

//! String-keyed registry of adapters and architectures. Experiment
//! configs reference entries by id; stub adapters ship built in so
//! pipelines run without network access.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    DiarizationAdapter,
    TranscriptionAdapter,
    SpeechEncoder,
    TextEncoder,
    Architecture,
    SchedulePreset,
}

impl std::fmt::Display for EntryKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EntryKind::DiarizationAdapter => "diarization-adapter",
            EntryKind::TranscriptionAdapter => "transcription-adapter",
            EntryKind::SpeechEncoder => "speech-encoder",
            EntryKind::TextEncoder => "text-encoder",
            EntryKind::Architecture => "architecture",
            EntryKind::SchedulePreset => "schedule-preset",
        };
        f.write_str(s)
    }
}

#[derive(Error, Debug)]
pub enum RegistryError {
    #[error("duplicate registry id {0:?}")]
    DuplicateId(String),
    #[error("unknown {kind}: {id:?} (known: {known:?})")]
    UnknownId {
        kind: EntryKind,
        id: String,
        known: Vec<String>,
    },
}

#[derive(Clone, Debug, Default)]
pub struct Registry {
    entries: BTreeMap<String, EntryKind>,
}

pub const ARCHITECTURES: &[&str] = &[
    "cnn2d",
    "freq-cnn",
    "resnet",
    "speech-multitask",
    "speech-singletask",
    "mlp",
    "svm",
    "finetune-text",
    "bilstm-attn",
];

impl Registry {
    /// The registry a fresh install sees: stub adapters plus every
    /// built-in architecture and schedule preset.
    pub fn builtin() -> Self {
        let mut r = Registry::default();
        r.register("replay-diarizer", EntryKind::DiarizationAdapter)
            .expect("unique");
        r.register("replay-asr", EntryKind::TranscriptionAdapter)
            .expect("unique");
        r.register("constant-encoder", EntryKind::SpeechEncoder)
            .expect("unique");
        r.register("sim-encoder", EntryKind::SpeechEncoder).expect("unique");
        r.register("sim-text-encoder", EntryKind::TextEncoder)
            .expect("unique");
        for id in ARCHITECTURES {
            r.register(id, EntryKind::Architecture).expect("unique");
        }
        for name in crate::train::TrainSchedule::preset_names() {
            r.register(name, EntryKind::SchedulePreset).expect("unique");
        }
        r
    }

    pub fn register(&mut self, id: &str, kind: EntryKind) -> Result<(), RegistryError> {
        if self.entries.contains_key(id) {
            return Err(RegistryError::DuplicateId(id.to_string()));
        }
        self.entries.insert(id.to_string(), kind);
        Ok(())
    }

    /// Lexicographically sorted listing.
    pub fn list(&self) -> Vec<(String, EntryKind)> {
        self.entries.iter().map(|(k, v)| (k.clone(), *v)).collect()
    }

    pub fn resolve(&self, id: &str, kind: EntryKind) -> Result<(), RegistryError> {
        match self.entries.get(id) {
            Some(&k) if k == kind => Ok(()),
            _ => Err(RegistryError::UnknownId {
                kind,
                id: id.to_string(),
                known: self
                    .entries
                    .iter()
                    .filter(|(_, &k)| k == kind)
                    .map(|(id, _)| id.clone())
                    .collect(),
            }),
        }
    }
}

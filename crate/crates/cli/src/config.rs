//! Declarative experiment configuration. Every run directory embeds the
//! resolved config and its hash, so runs are reproducible from the
//! artifact alone.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use lpa_core::registry::{EntryKind, Registry};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    /// Mandatory master seed; every stochastic stage derives from it.
    pub seed: u64,
    pub corpus: CorpusRef,
    #[serde(default)]
    pub preprocessing: Preprocessing,
    pub split: SplitSpec,
    pub model: ModelSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub report: ReportSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusRef {
    pub manifest: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeScope {
    PerUtterance,
    CorpusStats,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Preprocessing {
    #[serde(default = "default_segment_seconds")]
    pub segment_seconds: f64,
    #[serde(default = "default_n_mels")]
    pub n_mels: usize,
    #[serde(default = "default_normalize")]
    pub normalize: NormalizeScope,
    /// Dialogue corpora run silence removal, diarization, and
    /// transcription before feature extraction.
    #[serde(default)]
    pub dialogue: Option<DialogueSpec>,
    /// For waveform models: seconds of audio per utterance window.
    #[serde(default)]
    pub window_seconds: Option<f64>,
}

fn default_segment_seconds() -> f64 {
    8.0
}
fn default_n_mels() -> usize {
    40
}
fn default_normalize() -> NormalizeScope {
    NormalizeScope::PerUtterance
}

impl Default for Preprocessing {
    fn default() -> Self {
        Preprocessing {
            segment_seconds: default_segment_seconds(),
            n_mels: default_n_mels(),
            normalize: default_normalize(),
            dialogue: None,
            window_seconds: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DialogueSpec {
    pub diarizer: String,
    /// Labels file for the replay diarizer.
    pub labels: PathBuf,
    pub asr: String,
    /// Replay file for the replay transcription adapter.
    pub transcripts: PathBuf,
    #[serde(default = "default_variants")]
    pub variants: Vec<String>,
    /// Which variant feeds training: "full" or "student_only".
    #[serde(default = "default_variant")]
    pub variant_for_training: String,
    /// Windowing for text models over transcripts.
    #[serde(default)]
    pub transcript_window: Option<String>,
}

fn default_variants() -> Vec<String> {
    vec!["full".to_string(), "student_only".to_string()]
}
fn default_variant() -> String {
    "full".to_string()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "kebab-case")]
pub enum SplitSpec {
    /// Fixed per-(gender, level) test holdout, then stratified k-fold CV.
    HoldoutKfold { k: usize },
    /// Stratified k-fold without a test holdout.
    Kfold { k: usize },
    /// Stratified fixed-size essay subset.
    Subset { sizes: (usize, usize, usize) },
    /// Duration-matched speaker partition.
    DurationMatch {
        per_level: usize,
        reference_level: String,
        fraction: f64,
    },
    /// Pre-computed split file.
    File { path: PathBuf },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: String,
    /// Architecture-specific knobs (channel plans, hidden sizes, ...).
    #[serde(default)]
    pub options: serde_json::Value,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ScheduleSpec {
    /// Named preset to start from.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub max_epochs: Option<usize>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub lr_start: Option<f64>,
    #[serde(default)]
    pub lr_end: Option<f64>,
    #[serde(default)]
    pub weight_decay: Option<f64>,
    #[serde(default)]
    pub early_stop_patience: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportSpec {
    #[serde(default = "default_title")]
    pub title: String,
}

fn default_title() -> String {
    "experiment".to_string()
}

impl Default for ReportSpec {
    fn default() -> Self {
        ReportSpec {
            title: default_title(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }

    /// Canonical JSON bytes; the config hash is the SHA-256 of these.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        lpa_core::util::sha256_hex(&self.canonical_bytes())
    }

    /// Checks adapter/architecture references against the registry and
    /// the internal consistency of the blocks.
    pub fn validate(&self, registry: &Registry) -> Result<()> {
        registry
            .resolve(&self.model.architecture, EntryKind::Architecture)
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        if let Some(preset) = &self.schedule.preset {
            registry
                .resolve(preset, EntryKind::SchedulePreset)
                .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        }
        if let Some(dialogue) = &self.preprocessing.dialogue {
            registry
                .resolve(&dialogue.diarizer, EntryKind::DiarizationAdapter)
                .map_err(|e| anyhow::anyhow!(e.to_string()))?;
            registry
                .resolve(&dialogue.asr, EntryKind::TranscriptionAdapter)
                .map_err(|e| anyhow::anyhow!(e.to_string()))?;
            if !["full", "student_only"].contains(&dialogue.variant_for_training.as_str()) {
                bail!(
                    "variant_for_training must be \"full\" or \"student_only\", got {:?}",
                    dialogue.variant_for_training
                );
            }
        }
        if self.preprocessing.segment_seconds <= 0.0 {
            bail!("segment_seconds must be positive");
        }
        if let SplitSpec::DurationMatch { fraction, .. } = &self.split {
            if !(*fraction > 0.0 && *fraction <= 1.0) {
                bail!("duration-match fraction must be in (0, 1]");
            }
        }
        Ok(())
    }

    /// The training schedule: preset (or a plain default) plus overrides.
    pub fn resolved_schedule(&self) -> Result<lpa_core::train::TrainSchedule> {
        let mut schedule = match &self.schedule.preset {
            Some(name) => lpa_core::train::TrainSchedule::preset(name)
                .with_context(|| format!("unknown schedule preset {name:?}"))?,
            None => lpa_core::train::TrainSchedule {
                max_epochs: 10,
                batch_size: 8,
                optimizer: lpa_core::train::OptimizerKind::Adam,
                lr_start: 1e-3,
                lr_end: 1e-4,
                weight_decay: 1e-4,
                early_stop_patience: 10,
                seed: 0,
            },
        };
        if let Some(v) = self.schedule.max_epochs {
            schedule.max_epochs = v;
        }
        if let Some(v) = self.schedule.batch_size {
            schedule.batch_size = v;
        }
        if let Some(v) = self.schedule.lr_start {
            schedule.lr_start = v;
        }
        if let Some(v) = self.schedule.lr_end {
            schedule.lr_end = v;
        }
        if let Some(v) = self.schedule.weight_decay {
            schedule.weight_decay = v;
        }
        if let Some(v) = self.schedule.early_stop_patience {
            schedule.early_stop_patience = v;
        }
        schedule.seed = self.seed;
        schedule.validate().map_err(|e| anyhow::anyhow!(e.to_string()))?;
        Ok(schedule)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> serde_json::Value {
        serde_json::json!({
            "name": "t",
            "seed": 7,
            "corpus": {"manifest": "m.jsonl"},
            "split": {"protocol": "kfold", "k": 2},
            "model": {"architecture": "cnn2d"}
        })
    }

    #[test]
    fn minimal_config_parses_and_validates() {
        let config: ExperimentConfig = serde_json::from_value(minimal_json()).unwrap();
        config.validate(&Registry::builtin()).unwrap();
        assert_eq!(config.preprocessing.n_mels, 40);
        assert_eq!(config.preprocessing.segment_seconds, 8.0);
    }

    #[test]
    fn missing_seed_is_a_parse_error() {
        let mut v = minimal_json();
        v.as_object_mut().unwrap().remove("seed");
        assert!(serde_json::from_value::<ExperimentConfig>(v).is_err());
    }

    #[test]
    fn unknown_architecture_fails_validation() {
        let mut v = minimal_json();
        v["model"]["architecture"] = "made-up".into();
        let config: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert!(config.validate(&Registry::builtin()).is_err());
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let a: ExperimentConfig = serde_json::from_value(minimal_json()).unwrap();
        let b: ExperimentConfig = serde_json::from_value(minimal_json()).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut v = minimal_json();
        v["seed"] = 8.into();
        let c: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn schedule_overrides_apply_over_presets() {
        let mut v = minimal_json();
        v["schedule"] = serde_json::json!({"preset": "cnn-anglish", "max_epochs": 3});
        let config: ExperimentConfig = serde_json::from_value(v).unwrap();
        let schedule = config.resolved_schedule().unwrap();
        assert_eq!(schedule.max_epochs, 3);
        assert_eq!(schedule.batch_size, 8); // from the preset
        assert_eq!(schedule.seed, 7);
    }
}

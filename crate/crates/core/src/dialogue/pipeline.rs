//! Per-recording dialogue preprocessing driven through a bounded
//! work queue: silence removal on the raw signal, diarization on the
//! cleaned signal, variant construction, and transcription.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Manifest;
use crate::dsp::{self, PIPELINE_SAMPLE_RATE};

use super::diarize::{build_variants, diarize, select_learner, DiarizationAdapter, TurnSpan};
use super::silence::SilenceConfig;
use super::transcript::{save_transcript, transcribe, TranscriptionAdapter, Variant};
use super::{DialogueError, Result};

const MAX_RETRIES: usize = 2;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DialoguePipelineConfig {
    pub silence: SilenceConfig,
    pub variants: Vec<Variant>,
    /// Upper bound on concurrent per-recording adapter calls.
    pub jobs: usize,
}

impl Default for DialoguePipelineConfig {
    fn default() -> Self {
        DialoguePipelineConfig {
            silence: SilenceConfig::default(),
            variants: vec![Variant::Full, Variant::StudentOnly],
            jobs: 4,
        }
    }
}

/// Per-recording audit entry: what the diarizer said and what was built.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecordingReport {
    pub recording_id: String,
    pub learner_tag: Option<String>,
    pub turns: Vec<TurnSpan>,
    pub non_silent_coverage: f64,
    pub variant_durations_s: Vec<(Variant, f64)>,
    pub transcript_paths: Vec<(Variant, PathBuf)>,
    pub audio_paths: Vec<(Variant, PathBuf)>,
    pub diagnostics: Vec<String>,
}

/// The audit file for a whole run; the manual-review hook.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DialogueRunReport {
    /// Processing order is silence removal first, then diarization on the
    /// cleaned signal; recorded here so reviewers see which convention a
    /// run used.
    pub processing_order: String,
    pub recordings: Vec<RecordingReport>,
}

/// Runs dialogue preprocessing for every recording in the manifest.
///
/// Adapter calls go through a bounded-parallelism pool with up to two
/// retries per item; non-reentrant adapters are serialized behind a
/// mutex. Outputs (variant audio, transcripts) land under `out_dir`,
/// and the run report lists every span for manual review.
pub fn run_dialogue_pipeline(
    manifest: &Manifest,
    audio_root: &Path,
    diarizer: &dyn DiarizationAdapter,
    asr: &dyn TranscriptionAdapter,
    cfg: &DialoguePipelineConfig,
    out_dir: &Path,
) -> Result<DialogueRunReport> {
    std::fs::create_dir_all(out_dir).map_err(|source| DialogueError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;

    let serialize_diarizer = (!diarizer.info().reentrant).then(|| Mutex::new(()));

    let recordings: Vec<_> = manifest.recordings().collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| DialogueError::AdapterFailure {
            adapter: "worker-pool".to_string(),
            recording_id: String::new(),
            message: e.to_string(),
        })?;

    let mut reports: Vec<(usize, Result<RecordingReport>)> = pool.install(|| {
        recordings
            .par_iter()
            .enumerate()
            .map(|(idx, recording)| {
                let result = with_retries(|| {
                    process_recording(
                        manifest,
                        audio_root,
                        &recording.id,
                        &recording.path,
                        diarizer,
                        serialize_diarizer.as_ref(),
                        asr,
                        cfg,
                        out_dir,
                    )
                });
                (idx, result)
            })
            .collect()
    });
    reports.sort_by_key(|(idx, _)| *idx);

    let mut recordings_out = Vec::with_capacity(reports.len());
    for (_, r) in reports {
        recordings_out.push(r?);
    }
    Ok(DialogueRunReport {
        processing_order: "silence_removal_then_diarization".to_string(),
        recordings: recordings_out,
    })
}

fn with_retries<T>(mut f: impl FnMut() -> Result<T>) -> Result<T> {
    let mut last_err = None;
    for _ in 0..=MAX_RETRIES {
        match f() {
            Ok(v) => return Ok(v),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

#[allow(clippy::too_many_arguments)]
fn process_recording(
    manifest: &Manifest,
    audio_root: &Path,
    recording_id: &str,
    rel_path: &Path,
    diarizer: &dyn DiarizationAdapter,
    diarizer_lock: Option<&Mutex<()>>,
    asr: &dyn TranscriptionAdapter,
    cfg: &DialoguePipelineConfig,
    out_dir: &Path,
) -> Result<RecordingReport> {
    let _ = manifest;
    let wav_path = audio_root.join(rel_path);
    let raw = dsp::wav::read_wav(&wav_path)?;
    let clip = dsp::resample(&raw, PIPELINE_SAMPLE_RATE)?;

    let diarization = {
        let _guard = diarizer_lock.map(|m| m.lock().expect("diarizer lock"));
        diarize(&clip, recording_id, diarizer)?
    };
    let mut diagnostics = diarization.diagnostics.clone();

    let mut report = RecordingReport {
        recording_id: recording_id.to_string(),
        learner_tag: None,
        turns: diarization.turns.clone(),
        non_silent_coverage: diarization.non_silent_coverage,
        variant_durations_s: Vec::new(),
        transcript_paths: Vec::new(),
        audio_paths: Vec::new(),
        diagnostics: Vec::new(),
    };

    if diarization.turns.is_empty() {
        report.diagnostics = diagnostics;
        return Ok(report);
    }

    let learner = select_learner(&diarization.turns)?;
    report.learner_tag = Some(learner.clone());
    let variants = build_variants(&clip, &diarization.turns, &learner, &cfg.silence)?;

    for &variant in &cfg.variants {
        let audio = match variant {
            Variant::Full => &variants.full,
            Variant::StudentOnly => &variants.student_only,
        };
        report
            .variant_durations_s
            .push((variant, audio.duration_s()));

        let wav_out = out_dir.join(format!("{recording_id}.{variant}.wav"));
        dsp::wav::write_wav_pcm16(&wav_out, &audio.samples, PIPELINE_SAMPLE_RATE)?;
        report.audio_paths.push((variant, wav_out));

        let asr_key = format!("{recording_id}#{variant}");
        let transcript = transcribe(audio, asr, variant, &asr_key)
            .or_else(|_| transcribe(audio, asr, variant, recording_id))?;
        diagnostics.extend(transcript.diagnostics.clone());
        let t_path = out_dir.join(format!("{recording_id}.{variant}.transcript.json"));
        save_transcript(&transcript, &t_path)?;
        report.transcript_paths.push((variant, t_path));
    }

    report.diagnostics = diagnostics;
    Ok(report)
}

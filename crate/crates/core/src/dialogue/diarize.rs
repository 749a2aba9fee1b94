//! Speaker diarization behind an adapter interface, learner selection,
//! and construction of the full / student-only audio variants.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::{AudioClip, PIPELINE_SAMPLE_RATE};

use super::silence::{remove_silence, SilenceConfig};
use super::{DialogueError, Result};

/// One speaker-attributed time span.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnSpan {
    pub speaker_tag: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl TurnSpan {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Capability descriptor for a diarization backend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterInfo {
    pub id: String,
    pub max_speakers: Option<usize>,
    pub requires_network: bool,
    /// Whether concurrent calls on one handle are safe.
    pub reentrant: bool,
}

/// Interface to an external diarization system.
pub trait DiarizationAdapter: Send + Sync {
    fn info(&self) -> AdapterInfo;
    fn diarize(&self, clip: &AudioClip, recording_id: &str) -> Result<Vec<TurnSpan>>;
}

/// Replays speaker spans from a labels file; the oracle adapter used in
/// tests and for corpora with precomputed diarization.
pub struct ReplayDiarizer {
    labels: BTreeMap<String, Vec<TurnSpan>>,
}

#[derive(Deserialize)]
struct LabelRecord {
    recording_id: String,
    speaker: String,
    start_s: f64,
    end_s: f64,
}

impl ReplayDiarizer {
    pub fn new(labels: BTreeMap<String, Vec<TurnSpan>>) -> Self {
        ReplayDiarizer { labels }
    }

    /// Loads JSON-lines labels: `{"recording_id":..,"speaker":..,"start_s":..,"end_s":..}`.
    pub fn from_labels_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| DialogueError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut labels: BTreeMap<String, Vec<TurnSpan>> = BTreeMap::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| DialogueError::Io {
                path: path.display().to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: LabelRecord =
                serde_json::from_str(&line).map_err(|e| DialogueError::Parse {
                    path: path.display().to_string(),
                    message: format!("line {}: {e}", lineno + 1),
                })?;
            labels.entry(record.recording_id).or_default().push(TurnSpan {
                speaker_tag: record.speaker,
                start_s: record.start_s,
                end_s: record.end_s,
            });
        }
        Ok(ReplayDiarizer { labels })
    }
}

impl DiarizationAdapter for ReplayDiarizer {
    fn info(&self) -> AdapterInfo {
        AdapterInfo {
            id: "replay-diarizer".to_string(),
            max_speakers: None,
            requires_network: false,
            reentrant: true,
        }
    }

    fn diarize(&self, _clip: &AudioClip, recording_id: &str) -> Result<Vec<TurnSpan>> {
        self.labels
            .get(recording_id)
            .cloned()
            .ok_or_else(|| DialogueError::MissingLabels(recording_id.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiarizationResult {
    pub turns: Vec<TurnSpan>,
    /// Fraction of non-silent audio covered by the returned turns.
    pub non_silent_coverage: f64,
    pub diagnostics: Vec<String>,
}

/// Runs the adapter and normalizes its output: spans are sorted by start
/// time and pairwise overlaps are split at the overlap midpoint so the
/// result is non-overlapping. Coverage of the non-silent audio is audited
/// (a diagnostic below 90%) but never enforced.
pub fn diarize(
    clip: &AudioClip,
    recording_id: &str,
    adapter: &dyn DiarizationAdapter,
) -> Result<DiarizationResult> {
    if clip.sample_rate != PIPELINE_SAMPLE_RATE {
        return Err(DialogueError::WrongSampleRate(clip.sample_rate));
    }
    let non_silent = remove_silence(clip, &SilenceConfig::default())?;
    let non_silent_total: f64 = non_silent.iter().map(|(s, e)| e - s).sum();
    let mut diagnostics = Vec::new();

    if non_silent.is_empty() {
        diagnostics.push(format!("recording {recording_id}: input is fully silent"));
        return Ok(DiarizationResult {
            turns: Vec::new(),
            non_silent_coverage: 0.0,
            diagnostics,
        });
    }

    let raw = adapter
        .diarize(clip, recording_id)
        .map_err(|e| match e {
            DialogueError::MissingLabels(_) => e,
            other => DialogueError::AdapterFailure {
                adapter: adapter.info().id,
                recording_id: recording_id.to_string(),
                message: other.to_string(),
            },
        })?;

    for span in &raw {
        if !(span.end_s > span.start_s) {
            return Err(DialogueError::InvalidTurnSpan(format!(
                "{}: [{}, {}]",
                span.speaker_tag, span.start_s, span.end_s
            )));
        }
    }

    if raw.is_empty() {
        diagnostics.push(format!(
            "recording {recording_id}: adapter returned zero spans on non-silent input"
        ));
        return Ok(DiarizationResult {
            turns: Vec::new(),
            non_silent_coverage: 0.0,
            diagnostics,
        });
    }

    let turns = resolve_overlaps(raw);

    let covered: f64 = non_silent
        .iter()
        .map(|&(ns, ne)| {
            turns
                .iter()
                .map(|t| (t.end_s.min(ne) - t.start_s.max(ns)).max(0.0))
                .sum::<f64>()
        })
        .sum();
    let coverage = if non_silent_total > 0.0 {
        (covered / non_silent_total).min(1.0)
    } else {
        0.0
    };
    if coverage < 0.9 {
        diagnostics.push(format!(
            "recording {recording_id}: diarization covers {:.1}% of non-silent audio",
            coverage * 100.0
        ));
    }

    Ok(DiarizationResult {
        turns,
        non_silent_coverage: coverage,
        diagnostics,
    })
}

/// Sorts spans by start and resolves each pairwise overlap by moving the
/// boundary to the overlap midpoint, which is deterministic and
/// independent of input order.
fn resolve_overlaps(mut spans: Vec<TurnSpan>) -> Vec<TurnSpan> {
    spans.sort_by(|a, b| {
        a.start_s
            .total_cmp(&b.start_s)
            .then(a.end_s.total_cmp(&b.end_s))
            .then(a.speaker_tag.cmp(&b.speaker_tag))
    });
    let mut out: Vec<TurnSpan> = Vec::with_capacity(spans.len());
    for mut span in spans {
        if let Some(prev) = out.last_mut() {
            if span.start_s < prev.end_s {
                let midpoint = (span.start_s + prev.end_s) / 2.0;
                prev.end_s = midpoint;
                span.start_s = midpoint;
                if prev.end_s <= prev.start_s {
                    out.pop();
                }
            }
        }
        if span.end_s > span.start_s {
            out.push(span);
        }
    }
    out
}

/// The learner is the speaker with the longest total speaking time;
/// ties break to the lexicographically smallest tag.
pub fn select_learner(turns: &[TurnSpan]) -> Result<String> {
    if turns.is_empty() {
        return Err(DialogueError::EmptyTurnList);
    }
    let mut totals: BTreeMap<&str, f64> = BTreeMap::new();
    for t in turns {
        *totals.entry(&t.speaker_tag).or_insert(0.0) += t.duration();
    }
    // BTreeMap iterates tags in ascending order, so strict `>` keeps the
    // lexicographically smallest tag on ties.
    let mut best: Option<(&str, f64)> = None;
    for (tag, total) in totals {
        match best {
            Some((_, best_total)) if total <= best_total => {}
            _ => best = Some((tag, total)),
        }
    }
    Ok(best.expect("non-empty totals").0.to_string())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DialogueVariants {
    /// Silence-removed whole dialogue.
    pub full: AudioClip,
    /// Temporal concatenation of the learner's spans.
    pub student_only: AudioClip,
}

/// Builds the full-audio and student-only variants of a dialogue.
pub fn build_variants(
    clip: &AudioClip,
    turns: &[TurnSpan],
    learner: &str,
    silence_cfg: &SilenceConfig,
) -> Result<DialogueVariants> {
    if clip.sample_rate != PIPELINE_SAMPLE_RATE {
        return Err(DialogueError::WrongSampleRate(clip.sample_rate));
    }
    if !turns.iter().any(|t| t.speaker_tag == learner) {
        return Err(DialogueError::LearnerTagAbsent(learner.to_string()));
    }

    let full_spans = remove_silence(clip, silence_cfg)?;
    let full = concat_spans(clip, &full_spans);

    let learner_spans: Vec<(f64, f64)> = turns
        .iter()
        .filter(|t| t.speaker_tag == learner)
        .map(|t| (t.start_s, t.end_s))
        .collect();
    let student_only = concat_spans(clip, &learner_spans);

    Ok(DialogueVariants { full, student_only })
}

fn concat_spans(clip: &AudioClip, spans: &[(f64, f64)]) -> AudioClip {
    let sr = clip.sample_rate as f64;
    let mut samples = Vec::new();
    for &(s, e) in spans {
        let lo = ((s * sr).round() as usize).min(clip.samples.len());
        let hi = ((e * sr).round() as usize).min(clip.samples.len());
        samples.extend_from_slice(&clip.samples[lo..hi]);
    }
    AudioClip::new(samples, clip.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::silence::constant_level_samples;

    fn span(tag: &str, start: f64, end: f64) -> TurnSpan {
        TurnSpan {
            speaker_tag: tag.to_string(),
            start_s: start,
            end_s: end,
        }
    }

    fn speech_clip(seconds: f64) -> AudioClip {
        AudioClip::new(constant_level_samples(-10.0, seconds), 16000)
    }

    #[test]
    fn replay_adapter_round_trips_labels() {
        let mut labels = BTreeMap::new();
        labels.insert("r1".to_string(), vec![span("A", 0.0, 10.0), span("B", 10.0, 30.0)]);
        let adapter = ReplayDiarizer::new(labels);
        let clip = speech_clip(30.0);
        let result = diarize(&clip, "r1", &adapter).unwrap();
        assert_eq!(result.turns, vec![span("A", 0.0, 10.0), span("B", 10.0, 30.0)]);
        assert!(result.diagnostics.is_empty());
        assert!(result.non_silent_coverage > 0.99);
    }

    #[test]
    fn overlap_splits_at_midpoint() {
        let mut labels = BTreeMap::new();
        labels.insert("r1".to_string(), vec![span("A", 0.0, 12.0), span("B", 10.0, 30.0)]);
        let adapter = ReplayDiarizer::new(labels);
        let result = diarize(&speech_clip(30.0), "r1", &adapter).unwrap();
        assert_eq!(result.turns, vec![span("A", 0.0, 11.0), span("B", 11.0, 30.0)]);
    }

    #[test]
    fn silent_input_yields_diagnostic_and_empty_list() {
        let mut labels = BTreeMap::new();
        labels.insert("r1".to_string(), vec![span("A", 0.0, 1.0)]);
        let adapter = ReplayDiarizer::new(labels);
        let silent = AudioClip::new(vec![0.0; 32000], 16000);
        let result = diarize(&silent, "r1", &adapter).unwrap();
        assert!(result.turns.is_empty());
        assert_eq!(result.diagnostics.len(), 1);
    }

    #[test]
    fn zero_spans_on_speech_is_flagged() {
        let mut labels = BTreeMap::new();
        labels.insert("r1".to_string(), Vec::new());
        let adapter = ReplayDiarizer::new(labels);
        let result = diarize(&speech_clip(5.0), "r1", &adapter).unwrap();
        assert!(result.turns.is_empty());
        assert!(result.diagnostics[0].contains("zero spans"));
    }

    #[test]
    fn missing_labels_propagate_with_recording_id() {
        let adapter = ReplayDiarizer::new(BTreeMap::new());
        let err = diarize(&speech_clip(5.0), "rX", &adapter).unwrap_err();
        assert!(err.to_string().contains("rX"));
    }

    #[test]
    fn learner_is_longest_total_speaker() {
        let turns = vec![span("A", 0.0, 120.0), span("B", 120.0, 420.0)];
        assert_eq!(select_learner(&turns).unwrap(), "B");
    }

    #[test]
    fn learner_tie_breaks_lexicographically() {
        let turns = vec![span("B", 0.0, 100.0), span("A", 100.0, 200.0)];
        assert_eq!(select_learner(&turns).unwrap(), "A");
    }

    #[test]
    fn single_speaker_is_the_learner() {
        assert_eq!(select_learner(&[span("A", 0.0, 5.0)]).unwrap(), "A");
        assert!(matches!(select_learner(&[]), Err(DialogueError::EmptyTurnList)));
    }

    #[test]
    fn student_only_duration_sums_learner_spans() {
        let clip = speech_clip(10.0);
        let turns = vec![span("A", 0.0, 2.0), span("B", 2.0, 5.0), span("A", 5.0, 7.0)];
        let v = build_variants(&clip, &turns, "A", &SilenceConfig::default()).unwrap();
        assert!((v.student_only.duration_s() - 4.0).abs() < 2.0 / 16000.0);
        assert!((v.full.duration_s() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn learner_holding_all_spans_equals_full() {
        let clip = speech_clip(6.0);
        let turns = vec![span("A", 0.0, 6.0)];
        let v = build_variants(&clip, &turns, "A", &SilenceConfig::default()).unwrap();
        assert_eq!(v.student_only.samples.len(), v.full.samples.len());
    }

    #[test]
    fn absent_learner_tag_errors() {
        let clip = speech_clip(3.0);
        let turns = vec![span("A", 0.0, 3.0)];
        assert!(matches!(
            build_variants(&clip, &turns, "Z", &SilenceConfig::default()),
            Err(DialogueError::LearnerTagAbsent(_))
        ));
    }
}

//! Transcription through an adapter interface, transcript persistence,
//! and the 1-minute / 7-sentence windowing used by text models.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::{AudioClip, PIPELINE_SAMPLE_RATE};

use super::{DialogueError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    StudentOnly,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Full => f.write_str("full"),
            Variant::StudentOnly => f.write_str("student_only"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub start_s: Option<f64>,
    pub end_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub recording_id: String,
    pub variant: Variant,
    pub sentences: Vec<Sentence>,
    /// Identity and version of the adapter that produced the text.
    pub adapter_id: String,
    pub diagnostics: Vec<String>,
}

impl Transcript {
    pub fn text(&self) -> String {
        self.sentences
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsrInfo {
    pub id: String,
    pub language: String,
    pub produces_timestamps: bool,
}

/// Raw adapter output: plain text, optionally already split into
/// timestamped sentences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsrOutput {
    pub text: String,
    pub sentences: Option<Vec<Sentence>>,
}

/// Interface to an external speech-to-text system.
pub trait TranscriptionAdapter: Send + Sync {
    fn info(&self) -> AsrInfo;
    fn transcribe(&self, clip: &AudioClip, recording_id: &str) -> Result<AsrOutput>;
}

/// Replays transcriptions from a JSON file keyed by `recording_id` or
/// `recording_id#variant`.
pub struct ReplayAsr {
    map: std::collections::BTreeMap<String, AsrOutput>,
    produces_timestamps: bool,
}

impl ReplayAsr {
    pub fn new(map: std::collections::BTreeMap<String, AsrOutput>) -> Self {
        let produces_timestamps = map.values().any(|o| {
            o.sentences
                .as_ref()
                .is_some_and(|s| s.iter().any(|x| x.start_s.is_some()))
        });
        ReplayAsr {
            map,
            produces_timestamps,
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| DialogueError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let map = serde_json::from_reader(BufReader::new(file)).map_err(|e| {
            DialogueError::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            }
        })?;
        Ok(Self::new(map))
    }
}

impl TranscriptionAdapter for ReplayAsr {
    fn info(&self) -> AsrInfo {
        AsrInfo {
            id: "replay-asr".to_string(),
            language: "en".to_string(),
            produces_timestamps: self.produces_timestamps,
        }
    }

    fn transcribe(&self, _clip: &AudioClip, recording_id: &str) -> Result<AsrOutput> {
        self.map
            .get(recording_id)
            .cloned()
            .ok_or_else(|| DialogueError::AdapterFailure {
                adapter: "replay-asr".to_string(),
                recording_id: recording_id.to_string(),
                message: "no replay entry".to_string(),
            })
    }
}

/// Transcribes a clip and sentence-segments the result.
///
/// Adapter-provided timestamped sentences are used as-is (after a
/// monotonicity check); otherwise the text is split on `.`, `!`, or `?`
/// followed by whitespace. An empty transcription of non-silent audio is
/// recorded as a diagnostic, not an error.
pub fn transcribe(
    clip: &AudioClip,
    adapter: &dyn TranscriptionAdapter,
    variant: Variant,
    recording_id: &str,
) -> Result<Transcript> {
    if clip.sample_rate != PIPELINE_SAMPLE_RATE {
        return Err(DialogueError::WrongSampleRate(clip.sample_rate));
    }
    let output = adapter.transcribe(clip, recording_id)?;
    let mut diagnostics = Vec::new();

    let sentences = match output.sentences {
        Some(sentences) if !sentences.is_empty() => {
            let mut prev = f64::NEG_INFINITY;
            for s in &sentences {
                if let (Some(start), Some(end)) = (s.start_s, s.end_s) {
                    if start < prev || end < start {
                        return Err(DialogueError::NonMonotoneTimestamps(format!(
                            "{recording_id}: sentence at {start}..{end} after {prev}"
                        )));
                    }
                    prev = start;
                }
            }
            sentences
        }
        _ => split_sentences(&output.text),
    };

    if sentences.is_empty() && !clip.is_empty() {
        diagnostics.push(format!(
            "recording {recording_id} ({variant}): adapter produced an empty transcription \
             for {:.1} s of audio",
            clip.duration_s()
        ));
    }

    Ok(Transcript {
        recording_id: recording_id.to_string(),
        variant,
        sentences,
        adapter_id: adapter.info().id,
        diagnostics,
    })
}

/// Punctuation-based sentence splitting: `.`, `!`, `?` followed by
/// whitespace (or end of text) terminate a sentence.
pub fn split_sentences(text: &str) -> Vec<Sentence> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') {
            let at_break = chars.peek().is_none_or(|n| n.is_whitespace());
            if at_break {
                let trimmed = current.trim();
                if !trimmed.is_empty() {
                    sentences.push(Sentence {
                        text: trimmed.to_string(),
                        start_s: None,
                        end_s: None,
                    });
                }
                current.clear();
            }
        }
    }
    let trimmed = current.trim();
    if !trimmed.is_empty() {
        sentences.push(Sentence {
            text: trimmed.to_string(),
            start_s: None,
            end_s: None,
        });
    }
    sentences
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    OneMinute,
    SevenSentences,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptChunk {
    pub index: usize,
    pub sentences: Vec<Sentence>,
}

const SENTENCES_PER_CHUNK: usize = 7;
/// A final partial chunk at least this long stands alone; shorter tails
/// merge into the previous chunk.
const MIN_TAIL_SENTENCES: usize = 4;
const ONE_MINUTE_S: f64 = 60.0;

/// Windows a transcript into model-sized chunks.
///
/// `OneMinute` groups sentences by which consecutive 60 s span their
/// start time falls into (timestamps required); `SevenSentences` makes
/// consecutive chunks of exactly seven sentences, keeping a final
/// partial chunk only when it has at least four.
pub fn window_transcript(t: &Transcript, mode: WindowMode) -> Result<Vec<TranscriptChunk>> {
    if t.sentences.is_empty() {
        return Err(DialogueError::EmptyTranscript);
    }
    match mode {
        WindowMode::OneMinute => {
            if t.sentences.iter().any(|s| s.start_s.is_none()) {
                return Err(DialogueError::TimestampsRequired);
            }
            let mut buckets: std::collections::BTreeMap<usize, Vec<Sentence>> =
                std::collections::BTreeMap::new();
            for s in &t.sentences {
                let k = (s.start_s.unwrap() / ONE_MINUTE_S).floor() as usize;
                buckets.entry(k).or_default().push(s.clone());
            }
            Ok(buckets
                .into_values()
                .enumerate()
                .map(|(index, sentences)| TranscriptChunk { index, sentences })
                .collect())
        }
        WindowMode::SevenSentences => {
            let mut chunks: Vec<Vec<Sentence>> = t
                .sentences
                .chunks(SENTENCES_PER_CHUNK)
                .map(|c| c.to_vec())
                .collect();
            if chunks.len() > 1 {
                let tail_len = chunks.last().expect("non-empty").len();
                if tail_len < MIN_TAIL_SENTENCES {
                    let tail = chunks.pop().expect("non-empty");
                    chunks.last_mut().expect("non-empty").extend(tail);
                }
            }
            Ok(chunks
                .into_iter()
                .enumerate()
                .map(|(index, sentences)| TranscriptChunk { index, sentences })
                .collect())
        }
    }
}

/// Transcript store: one JSON document per recording and variant.
pub fn save_transcript(t: &Transcript, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| DialogueError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::to_writer_pretty(BufWriter::new(file), t).map_err(|e| DialogueError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_transcript(path: impl AsRef<Path>) -> Result<Transcript> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DialogueError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| DialogueError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::silence::constant_level_samples;
    use std::collections::BTreeMap;

    fn speech_clip(seconds: f64) -> AudioClip {
        AudioClip::new(constant_level_samples(-10.0, seconds), 16000)
    }

    fn stub_asr(recording_id: &str, output: AsrOutput) -> ReplayAsr {
        let mut map = BTreeMap::new();
        map.insert(recording_id.to_string(), output);
        ReplayAsr::new(map)
    }

    fn plain(text: &str) -> AsrOutput {
        AsrOutput {
            text: text.to_string(),
            sentences: None,
        }
    }

    fn numbered_sentences(n: usize, spacing_s: f64) -> Vec<Sentence> {
        (0..n)
            .map(|i| Sentence {
                text: format!("Sentence {i}."),
                start_s: Some(i as f64 * spacing_s),
                end_s: Some(i as f64 * spacing_s + spacing_s * 0.9),
            })
            .collect()
    }

    #[test]
    fn stub_text_splits_into_two_sentences() {
        let adapter = stub_asr("r1", plain("Hello. How are you."));
        let t = transcribe(&speech_clip(4.0), &adapter, Variant::Full, "r1").unwrap();
        assert_eq!(t.sentences.len(), 2);
        assert_eq!(t.sentences[0].text, "Hello.");
        assert_eq!(t.sentences[1].text, "How are you.");
    }

    #[test]
    fn timestamped_sentences_pass_through_with_monotonicity_check() {
        let sentences = numbered_sentences(3, 10.0);
        let adapter = stub_asr(
            "r1",
            AsrOutput {
                text: String::new(),
                sentences: Some(sentences.clone()),
            },
        );
        let t = transcribe(&speech_clip(30.0), &adapter, Variant::StudentOnly, "r1").unwrap();
        assert_eq!(t.sentences, sentences);

        let mut bad = sentences;
        bad.swap(0, 2);
        let adapter = stub_asr(
            "r1",
            AsrOutput {
                text: String::new(),
                sentences: Some(bad),
            },
        );
        assert!(matches!(
            transcribe(&speech_clip(30.0), &adapter, Variant::StudentOnly, "r1"),
            Err(DialogueError::NonMonotoneTimestamps(_))
        ));
    }

    #[test]
    fn empty_transcription_records_diagnostic() {
        let adapter = stub_asr("r1", plain(""));
        let t = transcribe(&speech_clip(30.0), &adapter, Variant::Full, "r1").unwrap();
        assert!(t.sentences.is_empty());
        assert_eq!(t.diagnostics.len(), 1);
    }

    fn transcript_of(sentences: Vec<Sentence>) -> Transcript {
        Transcript {
            recording_id: "r1".to_string(),
            variant: Variant::Full,
            sentences,
            adapter_id: "replay-asr".to_string(),
            diagnostics: Vec::new(),
        }
    }

    #[test]
    fn twenty_one_sentences_make_three_full_chunks() {
        let t = transcript_of(numbered_sentences(21, 1.0));
        let chunks = window_transcript(&t, WindowMode::SevenSentences).unwrap();
        assert_eq!(chunks.iter().map(|c| c.sentences.len()).collect::<Vec<_>>(), vec![7, 7, 7]);
    }

    #[test]
    fn seventeen_sentences_merge_the_short_tail() {
        let t = transcript_of(numbered_sentences(17, 1.0));
        let chunks = window_transcript(&t, WindowMode::SevenSentences).unwrap();
        assert_eq!(chunks.iter().map(|c| c.sentences.len()).collect::<Vec<_>>(), vec![7, 10]);
    }

    #[test]
    fn eleven_sentences_keep_a_four_sentence_tail() {
        let t = transcript_of(numbered_sentences(11, 1.0));
        let chunks = window_transcript(&t, WindowMode::SevenSentences).unwrap();
        assert_eq!(chunks.iter().map(|c| c.sentences.len()).collect::<Vec<_>>(), vec![7, 4]);
    }

    #[test]
    fn three_minutes_make_three_one_minute_chunks() {
        // 18 sentences spaced 10 s apart cover 0..180 s
        let t = transcript_of(numbered_sentences(18, 10.0));
        let chunks = window_transcript(&t, WindowMode::OneMinute).unwrap();
        assert_eq!(chunks.len(), 3);
        assert!(chunks.iter().all(|c| c.sentences.len() == 6));
    }

    #[test]
    fn one_minute_mode_requires_timestamps() {
        let t = transcript_of(split_sentences("One. Two. Three."));
        assert!(matches!(
            window_transcript(&t, WindowMode::OneMinute),
            Err(DialogueError::TimestampsRequired)
        ));
    }

    #[test]
    fn empty_transcript_cannot_be_windowed() {
        let t = transcript_of(Vec::new());
        assert!(matches!(
            window_transcript(&t, WindowMode::SevenSentences),
            Err(DialogueError::EmptyTranscript)
        ));
    }

    #[test]
    fn transcript_store_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        let t = transcript_of(numbered_sentences(3, 5.0));
        save_transcript(&t, &path).unwrap();
        assert_eq!(load_transcript(&path).unwrap(), t);
    }
}

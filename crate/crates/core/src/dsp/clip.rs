use serde::{Deserialize, Serialize};

/// Sample rate every pipeline stage after resampling operates at.
pub const PIPELINE_SAMPLE_RATE: u32 = 16_000;

/// Where a clip's samples came from within a recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpan {
    pub recording_id: String,
    pub start_s: f64,
    pub end_s: f64,
}

/// A mono waveform with sample values in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub source_span: Option<SourceSpan>,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        AudioClip {
            samples,
            sample_rate,
            source_span: None,
        }
    }

    pub fn with_span(mut self, span: SourceSpan) -> Self {
        self.source_span = Some(span);
        self
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One fixed-length excerpt of a clip, zero-padded at the tail if needed.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub clip: AudioClip,
    pub index: usize,
    /// Number of zeros appended to reach the fixed length.
    pub padded_samples: usize,
}

impl Segment {
    /// Samples that came from the source clip, excluding padding.
    pub fn unpadded(&self) -> &[f32] {
        &self.clip.samples[..self.clip.samples.len() - self.padded_samples]
    }
}

//! Silence detection over 10 ms RMS frames.

use serde::{Deserialize, Serialize};

use crate::dsp::{AudioClip, PIPELINE_SAMPLE_RATE};

use super::{DialogueError, Result};

/// Analysis frame for silence classification; dBFS is computed per frame.
const FRAME_MS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SilenceConfig {
    pub min_silence_ms: u32,
    pub threshold_dbfs: f64,
    pub keep_buffer_ms: u32,
}

impl Default for SilenceConfig {
    fn default() -> Self {
        SilenceConfig {
            min_silence_ms: 500,
            threshold_dbfs: -40.0,
            keep_buffer_ms: 100,
        }
    }
}

/// Returns the non-silent spans of a 16 kHz clip, in seconds.
///
/// A silent region is a maximal run of at least `min_silence_ms` of
/// consecutive 10 ms frames whose dBFS (20*log10 of frame RMS relative
/// to full scale) falls below the threshold. Every non-silent span is
/// extended by `keep_buffer_ms` on both sides, clipped to the clip
/// bounds; spans that touch after extension are merged. A fully silent
/// clip yields an empty list.
pub fn remove_silence(clip: &AudioClip, cfg: &SilenceConfig) -> Result<Vec<(f64, f64)>> {
    if clip.sample_rate != PIPELINE_SAMPLE_RATE {
        return Err(DialogueError::WrongSampleRate(clip.sample_rate));
    }
    if clip.is_empty() {
        return Ok(Vec::new());
    }

    let frame_len = PIPELINE_SAMPLE_RATE as usize * FRAME_MS / 1000;
    let n_frames = clip.samples.len().div_ceil(frame_len);
    let silent: Vec<bool> = (0..n_frames)
        .map(|f| {
            let start = f * frame_len;
            let end = (start + frame_len).min(clip.samples.len());
            frame_dbfs(&clip.samples[start..end]) < cfg.threshold_dbfs
        })
        .collect();

    let min_frames = (cfg.min_silence_ms as usize).div_ceil(FRAME_MS);
    let duration = clip.duration_s();
    let frame_s = FRAME_MS as f64 / 1000.0;

    // maximal silent runs long enough to count as silence
    let mut cut: Vec<(usize, usize)> = Vec::new(); // [start, end) in frames
    let mut run_start = None;
    for (f, &s) in silent.iter().enumerate() {
        match (s, run_start) {
            (true, None) => run_start = Some(f),
            (false, Some(start)) => {
                if f - start >= min_frames {
                    cut.push((start, f));
                }
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(start) = run_start {
        if n_frames - start >= min_frames {
            cut.push((start, n_frames));
        }
    }

    // complement of the silent runs, in seconds
    let mut spans: Vec<(f64, f64)> = Vec::new();
    let mut cursor = 0.0;
    for &(start, end) in &cut {
        let cut_start = start as f64 * frame_s;
        let cut_end = (end as f64 * frame_s).min(duration);
        if cut_start > cursor {
            spans.push((cursor, cut_start));
        }
        cursor = cut_end;
    }
    if cursor < duration {
        spans.push((cursor, duration));
    }

    // extend by the keep buffer and merge touching spans
    let buffer = cfg.keep_buffer_ms as f64 / 1000.0;
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (s, e) in spans {
        let s = (s - buffer).max(0.0);
        let e = (e + buffer).min(duration);
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    Ok(merged)
}

fn frame_dbfs(frame: &[f32]) -> f64 {
    if frame.is_empty() {
        return f64::NEG_INFINITY;
    }
    let mean_sq =
        frame.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / frame.len() as f64;
    20.0 * mean_sq.sqrt().max(1e-10).log10()
}

/// Builds a clip at a constant dBFS level (used by tests and fixtures).
#[doc(hidden)]
pub fn constant_level_samples(dbfs: f64, seconds: f64) -> Vec<f32> {
    let amplitude = 10f64.powf(dbfs / 20.0);
    let n = (seconds * PIPELINE_SAMPLE_RATE as f64).round() as usize;
    // square-ish wave so RMS equals the amplitude exactly
    (0..n)
        .map(|i| if i % 2 == 0 { amplitude } else { -amplitude } as f32)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(parts: &[(f64, f64)]) -> AudioClip {
        // parts: (dbfs, seconds)
        let mut samples = Vec::new();
        for &(dbfs, secs) in parts {
            samples.extend(constant_level_samples(dbfs, secs));
        }
        AudioClip::new(samples, 16000)
    }

    fn assert_spans_close(got: &[(f64, f64)], want: &[(f64, f64)], tol: f64) {
        assert_eq!(got.len(), want.len(), "{got:?} vs {want:?}");
        for (g, w) in got.iter().zip(want) {
            assert!((g.0 - w.0).abs() <= tol, "{got:?} vs {want:?}");
            assert!((g.1 - w.1).abs() <= tol, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn speech_silence_speech_keeps_buffered_spans() {
        let clip = layout(&[(-10.0, 1.0), (-60.0, 1.0), (-10.0, 1.0)]);
        let spans = remove_silence(&clip, &SilenceConfig::default()).unwrap();
        assert_spans_close(&spans, &[(0.0, 1.1), (1.9, 3.0)], 0.011);
    }

    #[test]
    fn uniform_speech_is_one_span() {
        let clip = layout(&[(-10.0, 2.5)]);
        let spans = remove_silence(&clip, &SilenceConfig::default()).unwrap();
        assert_spans_close(&spans, &[(0.0, 2.5)], 1e-9);
    }

    #[test]
    fn short_gap_below_minimum_never_splits() {
        let clip = layout(&[(-10.0, 1.0), (-60.0, 0.3), (-10.0, 1.0)]);
        let spans = remove_silence(&clip, &SilenceConfig::default()).unwrap();
        assert_spans_close(&spans, &[(0.0, 2.3)], 1e-9);
    }

    #[test]
    fn fully_silent_clip_yields_empty_list() {
        let clip = layout(&[(-70.0, 3.0)]);
        let spans = remove_silence(&clip, &SilenceConfig::default()).unwrap();
        assert!(spans.is_empty());
    }

    #[test]
    fn leading_and_trailing_silence_trimmed() {
        let clip = layout(&[(-60.0, 1.0), (-10.0, 1.0), (-60.0, 1.0)]);
        let spans = remove_silence(&clip, &SilenceConfig::default()).unwrap();
        assert_spans_close(&spans, &[(0.9, 2.1)], 0.011);
    }

    #[test]
    fn wrong_rate_is_rejected() {
        let clip = AudioClip::new(vec![0.0; 100], 8000);
        assert!(matches!(
            remove_silence(&clip, &SilenceConfig::default()),
            Err(DialogueError::WrongSampleRate(8000))
        ));
    }
}

use super::clip::{AudioClip, Segment, SourceSpan, PIPELINE_SAMPLE_RATE};
use super::{DspError, Result};

/// Cuts a 16 kHz clip into consecutive non-overlapping windows of
/// exactly `length_s` seconds.
///
/// Tail handling: a remainder of at least half the window is zero-padded
/// into a final segment; shorter remainders are dropped, unless they are
/// the clip's only content, in which case they are padded so short
/// recordings are never lost entirely. Segment indices are dense from 0.
pub fn segment(clip: &AudioClip, length_s: f64) -> Result<Vec<Segment>> {
    if clip.is_empty() {
        return Err(DspError::EmptyClip);
    }
    if clip.sample_rate != PIPELINE_SAMPLE_RATE {
        return Err(DspError::WrongSampleRate {
            expected: PIPELINE_SAMPLE_RATE,
            actual: clip.sample_rate,
        });
    }
    if !(length_s > 0.0) {
        return Err(DspError::InvalidSegmentLength(length_s));
    }

    let seg_len = (length_s * PIPELINE_SAMPLE_RATE as f64).round() as usize;
    let n = clip.samples.len();
    let n_full = n / seg_len;
    let tail = n % seg_len;
    let keep_tail = tail > 0 && (n_full == 0 || tail >= seg_len.div_ceil(2));

    let (base_id, base_start) = match &clip.source_span {
        Some(span) => (span.recording_id.clone(), span.start_s),
        None => (String::new(), 0.0),
    };

    let mut segments = Vec::with_capacity(n_full + keep_tail as usize);
    let mut emit = |index: usize, start: usize, content_len: usize| {
        let mut samples = clip.samples[start..start + content_len].to_vec();
        samples.resize(seg_len, 0.0);
        let start_s = base_start + start as f64 / PIPELINE_SAMPLE_RATE as f64;
        let end_s = start_s + content_len as f64 / PIPELINE_SAMPLE_RATE as f64;
        segments.push(Segment {
            clip: AudioClip {
                samples,
                sample_rate: PIPELINE_SAMPLE_RATE,
                source_span: Some(SourceSpan {
                    recording_id: base_id.clone(),
                    start_s,
                    end_s,
                }),
            },
            index,
            padded_samples: seg_len - content_len,
        });
    };

    for i in 0..n_full {
        emit(i, i * seg_len, seg_len);
    }
    if keep_tail {
        emit(n_full, n_full * seg_len, tail);
    }
    Ok(segments)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip_of(seconds: f64) -> AudioClip {
        let n = (seconds * 16000.0).round() as usize;
        AudioClip::new((0..n).map(|i| (i % 101) as f32 / 101.0).collect(), 16000)
    }

    #[test]
    fn exact_multiple_has_no_padding() {
        let segs = segment(&clip_of(16.0), 8.0).unwrap();
        assert_eq!(segs.len(), 2);
        for (i, s) in segs.iter().enumerate() {
            assert_eq!(s.index, i);
            assert_eq!(s.clip.samples.len(), 128_000);
            assert_eq!(s.padded_samples, 0);
        }
    }

    #[test]
    fn four_second_tail_is_padded() {
        let segs = segment(&clip_of(20.0), 8.0).unwrap();
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[2].padded_samples, 64_000);
        assert_eq!(segs[2].clip.samples.len(), 128_000);
    }

    #[test]
    fn short_tail_is_dropped() {
        let segs = segment(&clip_of(19.0), 8.0).unwrap(); // 3 s tail < 4 s
        assert_eq!(segs.len(), 2);
    }

    #[test]
    fn only_content_is_padded_not_dropped() {
        let segs = segment(&clip_of(3.0), 8.0).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].padded_samples, 80_000);
        assert!(segs[0].padded_samples < segs[0].clip.samples.len());
    }

    #[test]
    fn unpadded_concatenation_reconstructs_prefix() {
        let clip = clip_of(20.5);
        let segs = segment(&clip, 8.0).unwrap();
        let rebuilt: Vec<f32> = segs.iter().flat_map(|s| s.unpadded().to_vec()).collect();
        assert_eq!(rebuilt[..], clip.samples[..rebuilt.len()]);
    }

    #[test]
    fn spans_are_disjoint_ordered_and_offset_by_parent() {
        let mut clip = clip_of(17.0);
        clip.source_span = Some(SourceSpan {
            recording_id: "r9".to_string(),
            start_s: 100.0,
            end_s: 117.0,
        });
        let segs = segment(&clip, 8.0).unwrap();
        let mut prev_end = 100.0;
        for s in &segs {
            let span = s.clip.source_span.as_ref().unwrap();
            assert_eq!(span.recording_id, "r9");
            assert!((span.start_s - prev_end).abs() < 1e-9);
            assert!(span.end_s > span.start_s);
            prev_end = span.end_s;
        }
    }

    #[test]
    fn rejects_wrong_rate_and_bad_length() {
        let c = AudioClip::new(vec![0.0; 100], 44100);
        assert!(matches!(
            segment(&c, 8.0),
            Err(DspError::WrongSampleRate { .. })
        ));
        assert!(matches!(
            segment(&clip_of(1.0), 0.0),
            Err(DspError::InvalidSegmentLength(_))
        ));
    }
}

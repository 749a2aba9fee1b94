//! Synthetic-layout oracles for silence removal, learner selection, and
//! variant construction.

use lpa_core::dialogue::{
    build_variants, remove_silence, select_learner, ReplayDiarizer, SilenceConfig, TurnSpan,
};
use lpa_core::dsp::AudioClip;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A synthetic dialogue layout: alternating chunks at a known level,
/// all boundaries on 10 ms frames.
struct Layout {
    chunks: Vec<(bool, f64)>, // (is_speech, seconds)
}

impl Layout {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.random_range(2..8);
        let chunks = (0..n)
            .map(|i| {
                let speech = i % 2 == rng.random_range(0..2);
                // multiples of 10 ms between 0.10 s and 1.50 s
                let secs = rng.random_range(10..150) as f64 / 100.0;
                (speech, secs)
            })
            .collect();
        Layout { chunks }
    }

    fn clip(&self) -> AudioClip {
        let mut samples = Vec::new();
        for &(speech, secs) in &self.chunks {
            let dbfs = if speech { -10.0 } else { -60.0 };
            samples.extend(lpa_core::dialogue::constant_level_samples(dbfs, secs));
        }
        AudioClip::new(samples, 16000)
    }

    /// Independent expectation computed straight from the definition:
    /// silent runs of at least `min_ms` become cuts; the complement is
    /// buffered and merged.
    fn expected_spans(&self, cfg: &SilenceConfig) -> Vec<(f64, f64)> {
        let mut cursor = 0.0;
        let mut cuts: Vec<(f64, f64)> = Vec::new();
        let mut silent_run: Option<(f64, f64)> = None;
        for &(speech, secs) in &self.chunks {
            let end = cursor + secs;
            if !speech {
                silent_run = match silent_run {
                    Some((s, _)) => Some((s, end)),
                    None => Some((cursor, end)),
                };
            } else if let Some((s, e)) = silent_run.take() {
                if e - s >= cfg.min_silence_ms as f64 / 1000.0 - 1e-9 {
                    cuts.push((s, e));
                }
            }
            cursor = end;
        }
        if let Some((s, e)) = silent_run {
            if e - s >= cfg.min_silence_ms as f64 / 1000.0 - 1e-9 {
                cuts.push((s, e));
            }
        }
        let duration = cursor;
        let mut spans = Vec::new();
        let mut pos = 0.0;
        for &(s, e) in &cuts {
            if s > pos {
                spans.push((pos, s));
            }
            pos = e;
        }
        if pos < duration {
            spans.push((pos, duration));
        }
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
        merged
    }
}

#[test]
fn random_layouts_recover_their_planted_spans() {
    let cfg = SilenceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for trial in 0..60 {
        let layout = Layout::random(&mut rng);
        let got = remove_silence(&layout.clip(), &cfg).unwrap();
        let want = layout.expected_spans(&cfg);
        assert_eq!(got.len(), want.len(), "trial {trial}: {got:?} vs {want:?}");
        for (g, w) in got.iter().zip(&want) {
            assert!((g.0 - w.0).abs() <= 0.011, "trial {trial}: {got:?} vs {want:?}");
            assert!((g.1 - w.1).abs() <= 0.011, "trial {trial}: {got:?} vs {want:?}");
        }
    }
}

#[test]
fn no_loud_frame_is_ever_deleted() {
    let cfg = SilenceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..40 {
        let layout = Layout::random(&mut rng);
        let spans = remove_silence(&layout.clip(), &cfg).unwrap();
        // every speech chunk must be inside some kept span (+- 1 frame)
        let mut cursor = 0.0;
        for &(speech, secs) in &layout.chunks {
            let (s, e) = (cursor, cursor + secs);
            cursor = e;
            if !speech {
                continue;
            }
            let covered = spans
                .iter()
                .any(|&(ks, ke)| ks <= s + 0.011 && ke >= e - 0.011);
            assert!(covered, "speech chunk ({s}, {e}) not covered by {spans:?}");
        }
    }
}

fn random_turns(rng: &mut ChaCha8Rng, allow_ties: bool) -> Vec<TurnSpan> {
    let n_speakers = rng.random_range(1..5usize);
    let mut turns = Vec::new();
    let mut cursor = 0.0;
    for _ in 0..rng.random_range(1..12usize) {
        let speaker = rng.random_range(0..n_speakers);
        let len = if allow_ties {
            rng.random_range(1..5) as f64
        } else {
            rng.random_range(100..5000) as f64 / 1000.0
        };
        turns.push(TurnSpan {
            speaker_tag: format!("S{speaker}"),
            start_s: cursor,
            end_s: cursor + len,
        });
        cursor += len;
    }
    turns
}

#[test]
fn learner_selection_matches_the_max_duration_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..120 {
        let turns = random_turns(&mut rng, trial % 3 == 0);
        let got = select_learner(&turns).unwrap();

        // oracle: direct totals with the lexicographic tie rule
        let mut totals: std::collections::BTreeMap<&str, f64> = Default::default();
        for t in &turns {
            *totals.entry(t.speaker_tag.as_str()).or_insert(0.0) += t.end_s - t.start_s;
        }
        let best = totals
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
            .unwrap();
        assert_eq!(got, *best.0, "trial {trial}: totals {totals:?}");
    }
}

#[test]
fn learner_selection_is_invariant_under_positive_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..40 {
        let turns = random_turns(&mut rng, false);
        let tag = select_learner(&turns).unwrap();
        for scale in [0.25, 3.0, 1000.0] {
            let scaled: Vec<TurnSpan> = turns
                .iter()
                .map(|t| TurnSpan {
                    speaker_tag: t.speaker_tag.clone(),
                    start_s: t.start_s * scale,
                    end_s: t.end_s * scale,
                })
                .collect();
            assert_eq!(select_learner(&scaled).unwrap(), tag);
        }
    }
}

/// Goertzel power of a tone in a signal.
fn tone_power(samples: &[f32], hz: f64) -> f64 {
    let omega = std::f64::consts::TAU * hz / 16000.0;
    let coeff = 2.0 * omega.cos();
    let (mut s0, mut s1, mut s2) = (0.0f64, 0.0f64, 0.0f64);
    for &x in samples {
        s0 = x as f64 + coeff * s1 - s2;
        s2 = s1;
        s1 = s0;
    }
    (s1 * s1 + s2 * s2 - coeff * s1 * s2) / samples.len() as f64
}

#[test]
fn student_only_variant_contains_no_interviewer_watermark() {
    // learner speaks 300 Hz in (0,2) and (5,7); interviewer 3 kHz in (2,5) and (7,10)
    let mut samples = vec![0.0f32; 160_000];
    let fill = |samples: &mut Vec<f32>, from: f64, to: f64, hz: f64| {
        let (a, b) = ((from * 16000.0) as usize, (to * 16000.0) as usize);
        for i in a..b {
            samples[i] = (std::f64::consts::TAU * hz * i as f64 / 16000.0).sin() as f32 * 0.5;
        }
    };
    fill(&mut samples, 0.0, 2.0, 300.0);
    fill(&mut samples, 2.0, 5.0, 3000.0);
    fill(&mut samples, 5.0, 7.0, 300.0);
    fill(&mut samples, 7.0, 10.0, 3000.0);
    let clip = AudioClip::new(samples, 16000);
    let turns = vec![
        TurnSpan { speaker_tag: "L".to_string(), start_s: 0.0, end_s: 2.0 },
        TurnSpan { speaker_tag: "I".to_string(), start_s: 2.0, end_s: 5.0 },
        TurnSpan { speaker_tag: "L".to_string(), start_s: 5.0, end_s: 7.0 },
        TurnSpan { speaker_tag: "I".to_string(), start_s: 7.0, end_s: 10.0 },
    ];
    let v = build_variants(&clip, &turns, "L", &SilenceConfig::default()).unwrap();

    assert!((v.student_only.duration_s() - 4.0).abs() < 2.0 / 16000.0);
    let learner_power = tone_power(&v.student_only.samples, 300.0);
    let watermark_power = tone_power(&v.student_only.samples, 3000.0);
    assert!(
        watermark_power < learner_power * 1e-4,
        "interviewer watermark leaked: {watermark_power} vs {learner_power}"
    );
    // conservation: full is at least as long as student-only
    assert!(v.full.duration_s() >= v.student_only.duration_s());
}

#[test]
fn labels_file_round_trips_through_the_replay_adapter() {
    use lpa_core::dialogue::{diarize, DiarizationAdapter};

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.jsonl");
    std::fs::write(
        &path,
        concat!(
            "{\"recording_id\":\"r1\",\"speaker\":\"A\",\"start_s\":0.0,\"end_s\":10.0}\n",
            "{\"recording_id\":\"r1\",\"speaker\":\"B\",\"start_s\":10.0,\"end_s\":30.0}\n",
            "{\"recording_id\":\"r2\",\"speaker\":\"A\",\"start_s\":0.0,\"end_s\":5.0}\n",
        ),
    )
    .unwrap();
    let adapter = ReplayDiarizer::from_labels_file(&path).unwrap();
    assert_eq!(adapter.info().id, "replay-diarizer");

    let clip = AudioClip::new(lpa_core::dialogue::constant_level_samples(-10.0, 30.0), 16000);
    let result = diarize(&clip, "r1", &adapter).unwrap();
    assert_eq!(result.turns.len(), 2);
    assert_eq!(result.turns[0].speaker_tag, "A");
    assert_eq!(result.turns[1].end_s, 30.0);
}

//! Signal front-end oracles: brute-force DFT filterbank reference,
//! resampler tone preservation, and the frame/segment arithmetic.

use lpa_core::dsp::{
    fbank, resample, segment, zscore, AudioClip, FbankConfig, ZscoreScope,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Brute-force log-mel reference: naive O(N^2) DFT and triangular
/// filters constructed directly from the mel formulas. Shares no code
/// with the implementation under test.
mod oracle {
    pub fn mel(hz: f64) -> f64 {
        2595.0 * (1.0 + hz / 700.0).log10()
    }

    pub fn inv_mel(m: f64) -> f64 {
        700.0 * (10f64.powf(m / 2595.0) - 1.0)
    }

    pub fn log_mel_frames(
        samples: &[f32],
        n_mels: usize,
        f_min: f64,
        f_max: f64,
        log_floor: f64,
    ) -> Vec<Vec<f64>> {
        const FRAME: usize = 400;
        const HOP: usize = 160;
        const NFFT: usize = 512;
        const RATE: f64 = 16000.0;
        assert!(samples.len() >= FRAME);
        let n_frames = 1 + (samples.len() - FRAME) / HOP;

        let window: Vec<f64> = (0..FRAME)
            .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (FRAME - 1) as f64).cos())
            .collect();

        // mel band edges
        let lo = mel(f_min);
        let hi = mel(f_max);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| inv_mel(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();

        let mut out = Vec::with_capacity(n_frames);
        for t in 0..n_frames {
            let frame: Vec<f64> = (0..NFFT)
                .map(|i| {
                    if i < FRAME {
                        samples[t * HOP + i] as f64 * window[i]
                    } else {
                        0.0
                    }
                })
                .collect();
            // naive DFT, one-sided power
            let mut power = vec![0.0f64; NFFT / 2 + 1];
            for (k, p) in power.iter_mut().enumerate() {
                let mut re = 0.0;
                let mut im = 0.0;
                for (n, &x) in frame.iter().enumerate() {
                    let angle = -2.0 * std::f64::consts::PI * k as f64 * n as f64 / NFFT as f64;
                    re += x * angle.cos();
                    im += x * angle.sin();
                }
                *p = re * re + im * im;
            }
            let mut row = Vec::with_capacity(n_mels);
            for j in 0..n_mels {
                let (l, m, h) = (edges[j], edges[j + 1], edges[j + 2]);
                let mut energy = 0.0;
                for (k, &p) in power.iter().enumerate() {
                    let f = k as f64 * RATE / NFFT as f64;
                    let w = if f <= l || f >= h {
                        0.0
                    } else if f <= m {
                        (f - l) / (m - l)
                    } else {
                        (h - f) / (h - m)
                    };
                    energy += w * (2.0 / (h - l)) * p;
                }
                row.push((energy + log_floor).ln());
            }
            out.push(row);
        }
        out
    }
}

fn random_signal(rng: &mut ChaCha8Rng, seconds: f64) -> Vec<f32> {
    let n = (seconds * 16000.0).round() as usize;
    let tones: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(60.0..7000.0),
                rng.random_range(0.05..0.3),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    (0..n)
        .map(|i| {
            let t = i as f64 / 16000.0;
            let mut v = rng.random_range(-0.02..0.02);
            for &(f, a, p) in &tones {
                v += a * (std::f64::consts::TAU * f * t + p).sin();
            }
            v as f32
        })
        .collect()
}

#[test]
fn fbank_matches_the_brute_force_reference() {
    let cfg = FbankConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..5 {
        let seconds = rng.random_range(0.2..0.8);
        let samples = random_signal(&mut rng, seconds);
        let clip = AudioClip::new(samples.clone(), 16000);
        let ours = fbank(&clip, &cfg).unwrap();
        let reference = oracle::log_mel_frames(&samples, 40, 0.0, 8000.0, 1e-10);
        assert_eq!(ours.frames(), reference.len(), "trial {trial}");
        for (t, row) in reference.iter().enumerate() {
            for (j, &want) in row.iter().enumerate() {
                let got = ours.values[[t, j]] as f64;
                let rel = (got - want).abs() / want.abs().max(got.abs()).max(1e-3);
                assert!(
                    rel <= 1e-4,
                    "trial {trial} frame {t} bin {j}: {got} vs {want} (rel {rel})"
                );
            }
        }
    }
}

#[test]
fn resampled_tone_keeps_its_frequency() {
    // 1 s of 440 Hz at 44.1 kHz -> 16 kHz, DFT peak within 1 bin of 440
    let source: Vec<f32> = (0..44100)
        .map(|i| (std::f64::consts::TAU * 440.0 * i as f64 / 44100.0).sin() as f32 * 0.7)
        .collect();
    let clip = AudioClip::new(source, 44100);
    let out = resample(&clip, 16000).unwrap();
    assert_eq!(out.samples.len(), 16000);

    use rustfft::{num_complex::Complex, FftPlanner};
    let mut buf: Vec<Complex<f64>> = out
        .samples
        .iter()
        .map(|&s| Complex::new(s as f64, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(16000).process(&mut buf);
    let peak = (1..8000)
        .max_by(|&a, &b| buf[a].norm_sqr().total_cmp(&buf[b].norm_sqr()))
        .unwrap();
    assert!(
        (peak as i64 - 440).unsigned_abs() <= 1,
        "peak at {peak} Hz, expected 440"
    );
}

#[test]
fn upsampled_tone_keeps_its_frequency() {
    // 8 kHz source, 1 kHz tone, upsample to 16 kHz
    let source: Vec<f32> = (0..8000)
        .map(|i| (std::f64::consts::TAU * 1000.0 * i as f64 / 8000.0).sin() as f32 * 0.5)
        .collect();
    let out = resample(&AudioClip::new(source, 8000), 16000).unwrap();
    assert_eq!(out.samples.len(), 16000);

    use rustfft::{num_complex::Complex, FftPlanner};
    let mut buf: Vec<Complex<f64>> = out
        .samples
        .iter()
        .map(|&s| Complex::new(s as f64, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(16000).process(&mut buf);
    let peak = (1..8000)
        .max_by(|&a, &b| buf[a].norm_sqr().total_cmp(&buf[b].norm_sqr()))
        .unwrap();
    assert!((peak as i64 - 1000).unsigned_abs() <= 1, "peak at {peak} Hz");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn frame_count_formula_holds(len in 400usize..60_000) {
        let cfg = FbankConfig::default();
        let clip = AudioClip::new(vec![0.01; len], 16000);
        let fm = fbank(&clip, &cfg).unwrap();
        prop_assert_eq!(fm.frames(), 1 + (len - 400) / 160);
    }

    #[test]
    fn segment_coverage_reconstructs_the_prefix(len in 1usize..500_000, length_s in 1u8..12) {
        let samples: Vec<f32> = (0..len).map(|i| ((i * 7919) % 1000) as f32 / 1000.0 - 0.5).collect();
        let clip = AudioClip::new(samples.clone(), 16000);
        let segs = segment(&clip, length_s as f64).unwrap();
        prop_assert!(!segs.is_empty());
        // dense indices, disjoint ordered spans, prefix reconstruction
        let mut rebuilt = Vec::new();
        for (i, s) in segs.iter().enumerate() {
            prop_assert_eq!(s.index, i);
            rebuilt.extend_from_slice(s.unpadded());
        }
        prop_assert_eq!(&samples[..rebuilt.len()], &rebuilt[..]);
        // the uncovered tail is shorter than half a window (drop rule)
        let seg_len = (length_s as usize) * 16000;
        if segs.len() > 1 || segs[0].padded_samples == 0 {
            prop_assert!(len - rebuilt.len() < seg_len.div_ceil(2));
        }
    }

    #[test]
    fn zscore_columns_are_standard_or_zero(rows in 2usize..40, cols in 1usize..8, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = ndarray::Array2::from_shape_fn((rows, cols), |_| {
            rng.random_range(-5.0f32..5.0)
        });
        let fm = lpa_core::dsp::FeatureMatrix { values, frame_hop_ms: 10.0, normalized: false };
        let out = zscore(&fm, &ZscoreScope::PerUtterance).unwrap();
        prop_assert!(out.normalized);
        for j in 0..cols {
            let col = out.values.column(j);
            let all_zero = col.iter().all(|&v| v == 0.0);
            if all_zero {
                continue;
            }
            let n = rows as f64;
            let mean = col.iter().map(|&v| v as f64).sum::<f64>() / n;
            let var = col.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() <= 1e-5, "mean {}", mean);
            prop_assert!((var.sqrt() - 1.0).abs() <= 1e-5, "std {}", var.sqrt());
        }
    }
}

#[test]
fn fbank_output_is_deterministic_bytes() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let samples = random_signal(&mut rng, 0.5);
    let clip = AudioClip::new(samples, 16000);
    let cfg = FbankConfig::default();
    let a = fbank(&clip, &cfg).unwrap();
    let b = fbank(&clip, &cfg).unwrap();
    let bytes = |fm: &lpa_core::dsp::FeatureMatrix| -> Vec<u8> {
        fm.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    };
    assert_eq!(bytes(&a), bytes(&b));
}

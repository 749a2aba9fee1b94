//! Log-mel filterbank (FBank) feature extraction.

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::clip::{AudioClip, PIPELINE_SAMPLE_RATE};
use super::{DspError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FbankConfig {
    pub n_mels: usize,
    pub frame_length_ms: f64,
    pub frame_hop_ms: f64,
    pub fft_size: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
}

impl Default for FbankConfig {
    fn default() -> Self {
        FbankConfig {
            n_mels: 40,
            frame_length_ms: 25.0,
            frame_hop_ms: 10.0,
            fft_size: 512,
            f_min: 0.0,
            f_max: 8000.0,
            log_floor: 1e-10,
        }
    }
}

impl FbankConfig {
    pub fn frame_samples(&self) -> usize {
        (self.frame_length_ms * PIPELINE_SAMPLE_RATE as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.frame_hop_ms * PIPELINE_SAMPLE_RATE as f64 / 1000.0).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if self.n_mels < 1 {
            return Err(DspError::InvalidConfig("n_mels must be >= 1".to_string()));
        }
        if self.frame_hop_ms > self.frame_length_ms {
            return Err(DspError::InvalidConfig(
                "frame hop must not exceed frame length".to_string(),
            ));
        }
        if self.f_max > PIPELINE_SAMPLE_RATE as f64 / 2.0 {
            return Err(DspError::InvalidConfig(format!(
                "f_max {} exceeds Nyquist {}",
                self.f_max,
                PIPELINE_SAMPLE_RATE / 2
            )));
        }
        if self.fft_size < self.frame_samples() {
            return Err(DspError::InvalidConfig(format!(
                "fft_size {} smaller than frame ({} samples)",
                self.fft_size,
                self.frame_samples()
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(DspError::InvalidConfig(
                "log_floor must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// Time x mel-bin feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    /// frames x n_mels, row per frame.
    pub values: Array2<f32>,
    pub frame_hop_ms: f64,
    pub normalized: bool,
}

impl FeatureMatrix {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_mels(&self) -> usize {
        self.values.ncols()
    }
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filter edges: `n_mels + 2` frequencies (Hz) equally
/// spaced on the mel scale between `f_min` and `f_max`. Filter `j` rises
/// over [edge[j], edge[j+1]] and falls over [edge[j+1], edge[j+2]].
pub fn mel_filter_edges_hz(cfg: &FbankConfig) -> Vec<f64> {
    let mel_lo = hz_to_mel(cfg.f_min);
    let mel_hi = hz_to_mel(cfg.f_max);
    (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect()
}

/// The n_mels x (fft/2 + 1) filter matrix: triangular filters on the HTK
/// mel scale, each scaled to unit area over frequency (2 / width in Hz).
fn filter_matrix(cfg: &FbankConfig) -> Array2<f64> {
    let n_bins = cfg.fft_size / 2 + 1;
    let edges = mel_filter_edges_hz(cfg);
    let bin_hz = PIPELINE_SAMPLE_RATE as f64 / cfg.fft_size as f64;
    let mut filters = Array2::<f64>::zeros((cfg.n_mels, n_bins));
    for j in 0..cfg.n_mels {
        let (lo, mid, hi) = (edges[j], edges[j + 1], edges[j + 2]);
        let area_norm = 2.0 / (hi - lo);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= mid {
                (f - lo) / (mid - lo)
            } else {
                (hi - f) / (hi - mid)
            };
            filters[[j, k]] = w * area_norm;
        }
    }
    filters
}

fn hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Number of frames produced for `len` samples under `cfg`.
pub fn frame_count(len: usize, cfg: &FbankConfig) -> Option<usize> {
    let frame = cfg.frame_samples();
    let hop = cfg.hop_samples();
    (len >= frame).then(|| 1 + (len - frame) / hop)
}

/// Extracts log-mel filterbank features from a 16 kHz clip.
///
/// Each frame is Hamming-windowed, zero-padded to `fft_size`, transformed,
/// and reduced to one-sided power (re^2 + im^2 at bins 0..=fft/2). Mel
/// energies pass through `ln(energy + log_floor)`.
pub fn fbank(clip: &AudioClip, cfg: &FbankConfig) -> Result<FeatureMatrix> {
    cfg.validate()?;
    if clip.sample_rate != PIPELINE_SAMPLE_RATE {
        return Err(DspError::WrongSampleRate {
            expected: PIPELINE_SAMPLE_RATE,
            actual: clip.sample_rate,
        });
    }
    let frame_len = cfg.frame_samples();
    let hop = cfg.hop_samples();
    let n = clip.samples.len();
    let Some(n_frames) = frame_count(n, cfg) else {
        return Err(DspError::InputShorterThanFrame {
            samples: n,
            frame_samples: frame_len,
        });
    };

    let window = hamming(frame_len);
    let filters = filter_matrix(cfg);
    let n_bins = cfg.fft_size / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);

    let mut values = Array2::<f32>::zeros((n_frames, cfg.n_mels));
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    let mut power = vec![0.0f64; n_bins];
    for t in 0..n_frames {
        let start = t * hop;
        for i in 0..cfg.fft_size {
            let v = if i < frame_len {
                clip.samples[start + i] as f64 * window[i]
            } else {
                0.0
            };
            buf[i] = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in power.iter_mut().enumerate() {
            *p = buf[k].re * buf[k].re + buf[k].im * buf[k].im;
        }
        for j in 0..cfg.n_mels {
            let energy: f64 = filters
                .row(j)
                .iter()
                .zip(&power)
                .map(|(w, p)| w * p)
                .sum();
            let v = (energy + cfg.log_floor).ln();
            if !v.is_finite() {
                return Err(DspError::NonFiniteFeature { frame: t, bin: j });
            }
            values[[t, j]] = v as f32;
        }
    }

    Ok(FeatureMatrix {
        values,
        frame_hop_ms: cfg.frame_hop_ms,
        normalized: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip_seconds(s: f64) -> AudioClip {
        let n = (s * 16000.0).round() as usize;
        AudioClip::new(vec![0.0; n], 16000)
    }

    #[test]
    fn eight_second_clip_yields_798_by_40() {
        let fm = fbank(&clip_seconds(8.0), &FbankConfig::default()).unwrap();
        assert_eq!(fm.frames(), 798);
        assert_eq!(fm.n_mels(), 40);
    }

    #[test]
    fn zero_input_is_log_floor_everywhere() {
        let cfg = FbankConfig::default();
        let fm = fbank(&clip_seconds(1.0), &cfg).unwrap();
        let expected = (cfg.log_floor).ln() as f32;
        for &v in fm.values.iter() {
            assert_eq!(v, expected);
        }
    }

    #[test]
    fn pure_tone_peaks_in_the_bracketing_mel_bin() {
        let cfg = FbankConfig::default();
        let tone_hz = 1000.0f64;
        let n = 16000;
        let samples: Vec<f32> = (0..n)
            .map(|i| {
                (2.0 * std::f64::consts::PI * tone_hz * i as f64 / 16000.0).sin() as f32 * 0.5
            })
            .collect();
        let fm = fbank(&AudioClip::new(samples, 16000), &cfg).unwrap();

        // independent expectation from the mel formula: filters whose
        // support brackets the tone
        let edges = mel_filter_edges_hz(&cfg);
        let expected: Vec<usize> = (0..cfg.n_mels)
            .filter(|&j| edges[j] < tone_hz && tone_hz < edges[j + 2])
            .collect();
        assert!(!expected.is_empty());

        for row in fm.values.rows() {
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert!(
                expected.contains(&argmax),
                "argmax bin {argmax} not in bracketing set {expected:?}"
            );
        }
    }

    #[test]
    fn frame_count_formula() {
        let cfg = FbankConfig::default();
        assert_eq!(frame_count(128_000, &cfg), Some(798));
        assert_eq!(frame_count(400, &cfg), Some(1));
        assert_eq!(frame_count(399, &cfg), None);
        assert_eq!(frame_count(560, &cfg), Some(2));
    }

    #[test]
    fn too_short_input_errors() {
        let clip = AudioClip::new(vec![0.0; 399], 16000);
        assert!(matches!(
            fbank(&clip, &FbankConfig::default()),
            Err(DspError::InputShorterThanFrame { .. })
        ));
    }

    #[test]
    fn determinism_identical_bytes() {
        let samples: Vec<f32> = (0..8000).map(|i| ((i * 13) % 251) as f32 / 251.0 - 0.5).collect();
        let clip = AudioClip::new(samples, 16000);
        let a = fbank(&clip, &FbankConfig::default()).unwrap();
        let b = fbank(&clip, &FbankConfig::default()).unwrap();
        assert_eq!(a.values, b.values);
    }
}

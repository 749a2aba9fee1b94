//! Band-limited sample-rate conversion via windowed-sinc interpolation
//! with a Kaiser window (beta 8.6).

use super::clip::AudioClip;
use super::{DspError, Result};

/// Cutoff as a fraction of the smaller Nyquist rate; leaves a transition
/// band so the finite filter can actually attenuate at Nyquist.
const CUTOFF_FRACTION: f64 = 0.9;
/// Zero crossings of the sinc kernel per side at the cutoff rate.
const SINC_ZERO_CROSSINGS: usize = 16;
const KAISER_BETA: f64 = 8.6;

/// Resamples a clip to `target_rate`.
///
/// A clip already at the target rate is returned unchanged, bit-exact.
/// Otherwise each output sample is a windowed-sinc interpolation of the
/// input, low-passed at 0.9x the smaller Nyquist frequency, so tones
/// below Nyquist survive the conversion. Output length is
/// `round(len * target / source)`, preserving duration to within one
/// sample period.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if clip.is_empty() {
        return Err(DspError::EmptyClip);
    }
    if target_rate == 0 {
        return Err(DspError::InvalidSampleRate(target_rate));
    }
    if clip.sample_rate == 0 {
        return Err(DspError::InvalidSampleRate(clip.sample_rate));
    }
    if clip.sample_rate == target_rate {
        return Ok(clip.clone());
    }

    let source_rate = clip.sample_rate as f64;
    let ratio = target_rate as f64 / source_rate;
    let out_len = (clip.samples.len() as f64 * ratio).round().max(1.0) as usize;

    // rho = 2 * fc / source_rate, the cutoff in cycles per input sample.
    let rho = CUTOFF_FRACTION * ratio.min(1.0);
    let half_width = (SINC_ZERO_CROSSINGS as f64 / rho).ceil() as isize;
    let i0_beta = bessel_i0(KAISER_BETA);

    let x = &clip.samples;
    let n_in = x.len() as isize;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        // position of this output sample in input-sample units
        let center = n as f64 / ratio;
        let m_lo = (center.ceil() as isize - half_width).max(0);
        let m_hi = (center.floor() as isize + half_width).min(n_in - 1);
        let mut acc = 0.0f64;
        for m in m_lo..=m_hi {
            let d = center - m as f64;
            let window_arg = d / half_width as f64;
            if window_arg.abs() >= 1.0 {
                continue;
            }
            let w = bessel_i0(KAISER_BETA * (1.0 - window_arg * window_arg).sqrt()) / i0_beta;
            acc += x[m as usize] as f64 * rho * sinc(rho * d) * w;
        }
        out.push(acc as f32);
    }

    Ok(AudioClip {
        samples: out,
        sample_rate: target_rate,
        source_span: clip.source_span.clone(),
    })
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half_x = x / 2.0;
    for k in 1..64 {
        term *= (half_x / k as f64) * (half_x / k as f64);
        sum += term;
        if term < sum * 1e-14 {
            break;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_rate_is_bit_exact() {
        let samples: Vec<f32> = (0..1000).map(|i| ((i * 31) % 97) as f32 / 97.0).collect();
        let clip = AudioClip::new(samples.clone(), 16000);
        let out = resample(&clip, 16000).unwrap();
        assert_eq!(out.samples, samples);
    }

    #[test]
    fn zeros_resample_to_zeros_with_expected_length() {
        let clip = AudioClip::new(vec![0.0; 96000], 48000); // 2 s
        let out = resample(&clip, 16000).unwrap();
        assert_eq!(out.samples.len(), 32000);
        assert!(out.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn duration_preserved_within_one_sample() {
        for (len, src, dst) in [(44100usize, 44100u32, 16000u32), (12345, 22050, 16000), (8000, 8000, 16000)] {
            let clip = AudioClip::new(vec![0.1; len], src);
            let out = resample(&clip, dst).unwrap();
            let got = out.samples.len() as f64 / dst as f64;
            let want = len as f64 / src as f64;
            assert!(
                (got - want).abs() <= 1.0 / dst as f64,
                "{len}@{src}->{dst}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn empty_and_bad_rates_error() {
        assert!(matches!(
            resample(&AudioClip::new(vec![], 44100), 16000),
            Err(DspError::EmptyClip)
        ));
        assert!(matches!(
            resample(&AudioClip::new(vec![0.0; 10], 44100), 0),
            Err(DspError::InvalidSampleRate(0))
        ));
    }

    #[test]
    fn bessel_i0_matches_reference_values() {
        // Abramowitz & Stegun table values
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-12);
        assert!((bessel_i0(1.0) - 1.2660658777520084).abs() < 1e-12);
        assert!((bessel_i0(2.0) - 2.2795853023360673).abs() < 1e-12);
    }
}

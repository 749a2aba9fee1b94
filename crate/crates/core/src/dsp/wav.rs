//! Minimal RIFF/WAV reader and writer covering the two formats the
//! pipeline accepts: 16-bit integer PCM and 32-bit IEEE float PCM.
//! Multi-channel files are mixed down to mono by averaging.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::clip::AudioClip;
use super::{DspError, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| DspError::Io {
            path: path.display().to_string(),
            source,
        })?;
    parse_wav(&bytes).map_err(|message| DspError::Wav {
        path: path.display().to_string(),
        message,
    })
}

fn parse_wav(bytes: &[u8]) -> std::result::Result<AudioClip, String> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err("not a RIFF/WAVE file".to_string());
    }

    let mut format: Option<(u16, u16, u32, u16)> = None; // (fmt, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = (pos + 8 + size).min(bytes.len());
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err("fmt chunk too short".to_string());
                }
                let fmt = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                format = Some((fmt, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word-aligned
        pos += 8 + size + (size & 1);
    }

    let (fmt, channels, rate, bits) = format.ok_or("missing fmt chunk")?;
    let data = data.ok_or("missing data chunk")?;
    if channels == 0 {
        return Err("zero channels".to_string());
    }
    let channels = channels as usize;

    let interleaved: Vec<f32> = match (fmt, bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
            .collect(),
        (FORMAT_IEEE_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        _ => {
            return Err(format!(
                "unsupported format: tag {fmt}, {bits} bits (need PCM16 or float32)"
            ))
        }
    };

    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    Ok(AudioClip::new(samples, rate))
}

/// Writes a mono 16-bit PCM WAV file.
pub fn write_wav_pcm16(path: impl AsRef<Path>, samples: &[f32], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| DspError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);

    let data_len = (samples.len() * 2) as u32;
    w.write_all(b"RIFF").map_err(io_err)?;
    w.write_all(&(36 + data_len).to_le_bytes()).map_err(io_err)?;
    w.write_all(b"WAVE").map_err(io_err)?;
    w.write_all(b"fmt ").map_err(io_err)?;
    w.write_all(&16u32.to_le_bytes()).map_err(io_err)?;
    w.write_all(&FORMAT_PCM.to_le_bytes()).map_err(io_err)?;
    w.write_all(&1u16.to_le_bytes()).map_err(io_err)?;
    w.write_all(&sample_rate.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(sample_rate * 2).to_le_bytes()).map_err(io_err)?;
    w.write_all(&2u16.to_le_bytes()).map_err(io_err)?;
    w.write_all(&16u16.to_le_bytes()).map_err(io_err)?;
    w.write_all(b"data").map_err(io_err)?;
    w.write_all(&data_len.to_le_bytes()).map_err(io_err)?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Writes a mono 32-bit float WAV file.
pub fn write_wav_f32(path: impl AsRef<Path>, samples: &[f32], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| DspError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);

    let data_len = (samples.len() * 4) as u32;
    w.write_all(b"RIFF").map_err(io_err)?;
    w.write_all(&(36 + data_len).to_le_bytes()).map_err(io_err)?;
    w.write_all(b"WAVE").map_err(io_err)?;
    w.write_all(b"fmt ").map_err(io_err)?;
    w.write_all(&16u32.to_le_bytes()).map_err(io_err)?;
    w.write_all(&FORMAT_IEEE_FLOAT.to_le_bytes()).map_err(io_err)?;
    w.write_all(&1u16.to_le_bytes()).map_err(io_err)?;
    w.write_all(&sample_rate.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(sample_rate * 4).to_le_bytes()).map_err(io_err)?;
    w.write_all(&4u16.to_le_bytes()).map_err(io_err)?;
    w.write_all(&32u16.to_le_bytes()).map_err(io_err)?;
    w.write_all(b"data").map_err(io_err)?;
    w.write_all(&data_len.to_le_bytes()).map_err(io_err)?;
    for &s in samples {
        w.write_all(&s.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let samples: Vec<f32> = (0..100).map(|i| (i as f32 / 100.0).sin() * 0.5).collect();
        write_wav_pcm16(&path, &samples, 16000).unwrap();
        let clip = read_wav(&path).unwrap();
        assert_eq!(clip.sample_rate, 16000);
        assert_eq!(clip.samples.len(), 100);
        for (a, b) in clip.samples.iter().zip(&samples) {
            assert!((a - b).abs() < 1.0 / 32000.0);
        }
    }

    #[test]
    fn float32_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let samples: Vec<f32> = (0..64).map(|i| ((i * 37) % 101) as f32 / 101.0 - 0.5).collect();
        write_wav_f32(&path, &samples, 44100).unwrap();
        let clip = read_wav(&path).unwrap();
        assert_eq!(clip.sample_rate, 44100);
        assert_eq!(clip.samples, samples);
    }

    #[test]
    fn rejects_non_wav_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        std::fs::write(&path, b"definitely not audio").unwrap();
        assert!(matches!(read_wav(&path), Err(DspError::Wav { .. })));
    }
}

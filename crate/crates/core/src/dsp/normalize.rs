//! Per-bin z-score normalization of feature matrices.

use ndarray::Array2;

use super::fbank::FeatureMatrix;
use super::{DspError, Result};

/// Variances below this are treated as zero and the column is zeroed out.
const VARIANCE_GUARD: f64 = 1e-8;

/// Where normalization statistics come from.
#[derive(Clone, Debug, PartialEq)]
pub enum ZscoreScope {
    /// Mean/std computed from the matrix itself.
    PerUtterance,
    /// Precomputed per-bin corpus statistics.
    CorpusStats { mean: Vec<f64>, std: Vec<f64> },
}

/// Normalizes each mel bin to zero mean and unit variance.
///
/// Uses the population standard deviation. Columns whose std falls below
/// the epsilon guard become all-zero. Re-normalizing an already
/// normalized matrix is refused.
pub fn zscore(features: &FeatureMatrix, scope: &ZscoreScope) -> Result<FeatureMatrix> {
    if features.normalized {
        return Err(DspError::AlreadyNormalized);
    }
    let (n_frames, n_mels) = (features.frames(), features.n_mels());

    let (mean, std) = match scope {
        ZscoreScope::PerUtterance => {
            let mut mean = vec![0.0f64; n_mels];
            let mut std = vec![0.0f64; n_mels];
            for j in 0..n_mels {
                let col = features.values.column(j);
                let m = col.iter().map(|&v| v as f64).sum::<f64>() / n_frames as f64;
                let var = col
                    .iter()
                    .map(|&v| {
                        let d = v as f64 - m;
                        d * d
                    })
                    .sum::<f64>()
                    / n_frames as f64;
                mean[j] = m;
                std[j] = var.sqrt();
            }
            (mean, std)
        }
        ZscoreScope::CorpusStats { mean, std } => {
            if mean.len() != n_mels || std.len() != n_mels {
                return Err(DspError::StatsDimensionMismatch {
                    expected: n_mels,
                    actual: mean.len().min(std.len()),
                });
            }
            (mean.clone(), std.clone())
        }
    };

    let mut values = Array2::<f32>::zeros((n_frames, n_mels));
    for j in 0..n_mels {
        if std[j] < VARIANCE_GUARD {
            continue; // zero-variance column stays all-zero
        }
        for i in 0..n_frames {
            values[[i, j]] = ((features.values[[i, j]] as f64 - mean[j]) / std[j]) as f32;
        }
    }

    Ok(FeatureMatrix {
        values,
        frame_hop_ms: features.frame_hop_ms,
        normalized: true,
    })
}

//! Classification losses: negative log-likelihood and the weighted
//! multi-task combination over the level and gender heads.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Result, TrainError};

/// Coefficients of the combined loss
/// `level_weight * L_level + gender_weight * L_gender`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskWeights {
    pub level_weight: f64,
    pub gender_weight: f64,
}

impl Default for MultiTaskWeights {
    fn default() -> Self {
        MultiTaskWeights {
            level_weight: 3.0,
            gender_weight: 1.0,
        }
    }
}

/// Batch-mean negative log-likelihood with its gradient on the
/// log-probabilities.
pub fn nll_loss(logp: &Array2<f64>, targets: &[usize]) -> Result<(f64, Array2<f64>)> {
    if targets.is_empty() {
        return Err(TrainError::EmptyData("loss targets"));
    }
    let classes = logp.ncols();
    let n = targets.len();
    let mut loss = 0.0;
    let mut grad = Array2::zeros(logp.raw_dim());
    for (i, &t) in targets.iter().enumerate() {
        if t >= classes {
            return Err(TrainError::TargetOutOfRange { target: t, classes });
        }
        loss -= logp[[i, t]];
        grad[[i, t]] = -1.0 / n as f64;
    }
    Ok((loss / n as f64, grad))
}

/// The combined multi-task loss value.
pub fn multitask_loss(
    level_logp: &Array2<f64>,
    gender_logp: &Array2<f64>,
    level_targets: &[usize],
    gender_targets: &[usize],
    weights: &MultiTaskWeights,
) -> Result<f64> {
    let (level, _) = nll_loss(level_logp, level_targets)?;
    let (gender, _) = nll_loss(gender_logp, gender_targets)?;
    Ok(weights.level_weight * level + weights.gender_weight * gender)
}

/// Loss plus the per-head gradients used by the training loop.
pub fn multitask_loss_and_grads(
    level_logp: &Array2<f64>,
    gender_logp: &Array2<f64>,
    level_targets: &[usize],
    gender_targets: &[usize],
    weights: &MultiTaskWeights,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let (level, mut dlevel) = nll_loss(level_logp, level_targets)?;
    let (gender, mut dgender) = nll_loss(gender_logp, gender_targets)?;
    dlevel *= weights.level_weight;
    dgender *= weights.gender_weight;
    Ok((
        weights.level_weight * level + weights.gender_weight * gender,
        dlevel,
        dgender,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// A single-row log-distribution whose NLL at class 0 is exactly `x`.
    fn row_with_nll(x: f64) -> Array2<f64> {
        let p0 = (-x).exp();
        array![[(-x), (1.0 - p0).ln()]]
    }

    #[test]
    fn weighted_combination_matches_hand_arithmetic() {
        let level = row_with_nll(0.5);
        let gender = row_with_nll(0.2);
        let loss =
            multitask_loss(&level, &gender, &[0], &[0], &MultiTaskWeights::default()).unwrap();
        assert!((loss - 1.7).abs() < 1e-12, "3*0.5 + 0.2 = 1.7, got {loss}");
    }

    #[test]
    fn perfect_one_hot_predictions_give_zero_loss() {
        let level = array![[0.0, -1e9, -1e9]];
        let gender = array![[0.0, -1e9]];
        let loss =
            multitask_loss(&level, &gender, &[0], &[0], &MultiTaskWeights::default()).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn uniform_predictions_equal_three_ln3_plus_ln2() {
        let level = Array2::from_elem((4, 3), (1.0f64 / 3.0).ln());
        let gender = Array2::from_elem((4, 2), 0.5f64.ln());
        let loss = multitask_loss(
            &level,
            &gender,
            &[0, 1, 2, 0],
            &[0, 1, 0, 1],
            &MultiTaskWeights::default(),
        )
        .unwrap();
        let expected = 3.0 * 3.0f64.ln() + 2.0f64.ln();
        assert!((loss - expected).abs() < 1e-6, "{loss} vs {expected}");
    }

    #[test]
    fn out_of_range_target_is_rejected() {
        let level = array![[0.0, -1.0]];
        assert!(matches!(
            nll_loss(&level, &[2]),
            Err(TrainError::TargetOutOfRange { target: 2, classes: 2 })
        ));
    }
}

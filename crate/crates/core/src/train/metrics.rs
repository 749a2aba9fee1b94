//! Accuracy and macro-averaged precision/recall/F1 over a confusion
//! matrix.

use serde::{Deserialize, Serialize};

use super::{Result, TrainError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// confusion[true][predicted] counts.
    pub confusion: Vec<Vec<usize>>,
}

/// Computes accuracy and macro metrics.
///
/// Macro values are unweighted means of per-class precision, recall, and
/// F1 (the harmonic mean of that class's P and R). Degenerate 0/0 ratios
/// are defined as 0 so macro averages stay defined on folds where a
/// class never occurs or is never predicted.
pub fn evaluate(predictions: &[usize], labels: &[usize], num_classes: usize) -> Result<Metrics> {
    if predictions.len() != labels.len() {
        return Err(TrainError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(TrainError::EmptyData("evaluation"));
    }
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        if p >= num_classes {
            return Err(TrainError::TargetOutOfRange {
                target: p,
                classes: num_classes,
            });
        }
        if l >= num_classes {
            return Err(TrainError::TargetOutOfRange {
                target: l,
                classes: num_classes,
            });
        }
        confusion[l][p] += 1;
    }

    let total: usize = predictions.len();
    let correct: usize = (0..num_classes).map(|k| confusion[k][k]).sum();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };

    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut f1_sum = 0.0;
    for k in 0..num_classes {
        let tp = confusion[k][k];
        let predicted: usize = (0..num_classes).map(|l| confusion[l][k]).sum();
        let actual: usize = confusion[k].iter().sum();
        let p = ratio(tp, predicted);
        let r = ratio(tp, actual);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        precision_sum += p;
        recall_sum += r;
        f1_sum += f1;
    }

    Ok(Metrics {
        accuracy: correct as f64 / total as f64,
        macro_precision: precision_sum / num_classes as f64,
        macro_recall: recall_sum / num_classes as f64,
        macro_f1: f1_sum / num_classes as f64,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_score_one_everywhere() {
        let labels = vec![0, 1, 2, 0, 1, 2];
        let m = evaluate(&labels, &labels, 3).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_precision, 1.0);
        assert_eq!(m.macro_recall, 1.0);
        assert_eq!(m.macro_f1, 1.0);
    }

    #[test]
    fn all_class_zero_on_balanced_three_class_data() {
        let labels = vec![0, 0, 1, 1, 2, 2];
        let predictions = vec![0; 6];
        let m = evaluate(&predictions, &labels, 3).unwrap();
        assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-12);
        // class 0: P = 1/3, R = 1 -> F1 = 0.5; classes 1, 2: all zero
        assert!((m.macro_f1 - 0.5 / 3.0).abs() < 1e-12);
        assert!((m.macro_f1 - 0.1667).abs() < 1e-4);
    }

    #[test]
    fn two_class_confusion_fixture() {
        // confusion [[2,1],[1,2]]
        let labels = vec![0, 0, 0, 1, 1, 1];
        let predictions = vec![0, 0, 1, 0, 1, 1];
        let m = evaluate(&predictions, &labels, 2).unwrap();
        assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-12);
        assert!((m.macro_precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.macro_recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.macro_f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.confusion, vec![vec![2, 1], vec![1, 2]]);
    }

    #[test]
    fn accuracy_equals_trace_over_total() {
        let labels = vec![0, 1, 2, 2, 1];
        let predictions = vec![1, 1, 2, 0, 0];
        let m = evaluate(&predictions, &labels, 3).unwrap();
        let trace: usize = (0..3).map(|k| m.confusion[k][k]).sum();
        let total: usize = m.confusion.iter().flatten().sum();
        assert_eq!(m.accuracy, trace as f64 / total as f64);
    }

    #[test]
    fn degenerate_inputs_error() {
        assert!(matches!(
            evaluate(&[], &[], 3),
            Err(TrainError::EmptyData(_))
        ));
        assert!(matches!(
            evaluate(&[0], &[0, 1], 3),
            Err(TrainError::LengthMismatch { .. })
        ));
        assert!(matches!(
            evaluate(&[5], &[0], 3),
            Err(TrainError::TargetOutOfRange { .. })
        ));
    }
}

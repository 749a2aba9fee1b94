//! The training loop: seeded batch order, per-epoch linear learning-rate
//! decay, per-component optimizers, early stopping on validation loss,
//! and best-checkpoint retention.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::models::{Mode, TrainableClassifier};
use crate::util::derive_seed;

use super::dataset::Dataset;
use super::loss::{multitask_loss_and_grads, nll_loss, MultiTaskWeights};
use super::optimizer::{LrMap, Optimizer};
use super::schedule::TrainSchedule;
use super::{Result, TrainError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// 0-based epoch whose validation loss was lowest; the model is
    /// restored to this epoch's parameters.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: usize,
    wait: usize,
}

impl EarlyStopper {
    fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
        }
    }

    /// Returns (improved, stop).
    fn observe(&mut self, epoch: usize, val_loss: f64) -> (bool, bool) {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.wait = 0;
            (true, false)
        } else {
            self.wait += 1;
            (false, self.wait >= self.patience)
        }
    }
}

/// Trains `model` on `train_data`, monitoring `val_data`.
///
/// The learning rate follows `schedule.lr_at(epoch)`; parameter groups
/// named in `lr_map` use their own base rate scaled by the same decay
/// factor. Training stops `patience` epochs after the best validation
/// loss, and the best epoch's parameters are restored before returning.
pub fn train(
    model: &mut dyn TrainableClassifier,
    train_data: &Dataset,
    val_data: &Dataset,
    schedule: &TrainSchedule,
    lr_map: &LrMap,
    weights: Option<&MultiTaskWeights>,
) -> Result<TrainOutcome> {
    schedule.validate()?;
    if train_data.is_empty() {
        return Err(TrainError::EmptyData("training set"));
    }
    if val_data.is_empty() {
        return Err(TrainError::EmptyData("validation set"));
    }

    let mut optimizer = Optimizer::new(schedule.optimizer, schedule.weight_decay);
    let mut stopper = EarlyStopper::new(schedule.early_stop_patience.max(1));
    let mut best_snapshot = model.snapshot();
    let mut history = Vec::new();

    let mut indices: Vec<usize> = (0..train_data.len()).collect();
    for epoch in 0..schedule.max_epochs {
        let lr_epoch = schedule.lr_at(epoch);
        let decay_factor = if schedule.lr_start > 0.0 {
            lr_epoch / schedule.lr_start
        } else {
            1.0
        };
        let lr_for = |group: &str| lr_map.base_lr(group, schedule.lr_start) * decay_factor;

        model.reseed_dropout(derive_seed(schedule.seed, &format!("dropout:{epoch}")));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(schedule.seed, &format!("shuffle:{epoch}")));
        indices.shuffle(&mut rng);

        let mut train_loss_sum = 0.0;
        let mut train_items = 0usize;
        for chunk in indices.chunks(schedule.batch_size) {
            let batch = train_data.batch(chunk)?;
            model.zero_grads();
            let output = model.forward(&batch, Mode::Train)?;
            let level_targets = train_data.level_targets(chunk);
            let (loss, dlevel, dgender) = match (&output.gender_logp, weights) {
                (Some(gender_logp), Some(w)) => {
                    let gender_targets = train_data
                        .gender_targets(chunk)
                        .ok_or(TrainError::EmptyData("gender targets"))?;
                    let (loss, dl, dg) = multitask_loss_and_grads(
                        &output.level_logp,
                        gender_logp,
                        &level_targets,
                        &gender_targets,
                        w,
                    )?;
                    (loss, dl, Some(dg))
                }
                _ => {
                    let (loss, dl) = nll_loss(&output.level_logp, &level_targets)?;
                    (loss, dl, None)
                }
            };
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    item_ids: train_data.batch_ids(chunk),
                });
            }
            model.backward(&dlevel, dgender.as_ref());
            let mut params = model.params_mut();
            optimizer.step(&mut params, &lr_for);
            train_loss_sum += loss * chunk.len() as f64;
            train_items += chunk.len();
        }

        let (val_loss, val_accuracy) = validate(model, val_data, schedule.batch_size, weights)?;
        history.push(EpochRecord {
            epoch,
            train_loss: train_loss_sum / train_items as f64,
            val_loss,
            val_accuracy,
            lr: lr_epoch,
        });

        let (improved, stop) = stopper.observe(epoch, val_loss);
        if improved {
            best_snapshot = model.snapshot();
        }
        if stop {
            break;
        }
    }

    model.restore(&best_snapshot);
    Ok(TrainOutcome {
        history,
        best_epoch: stopper.best_epoch,
        best_val_loss: stopper.best,
    })
}

fn validate(
    model: &mut dyn TrainableClassifier,
    data: &Dataset,
    batch_size: usize,
    weights: Option<&MultiTaskWeights>,
) -> Result<(f64, f64)> {
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for chunk in indices.chunks(batch_size) {
        let batch = data.batch(chunk)?;
        let output = model.forward(&batch, Mode::Eval)?;
        let level_targets = data.level_targets(chunk);
        let loss = match (&output.gender_logp, weights) {
            (Some(gender_logp), Some(w)) => {
                let gender_targets = data
                    .gender_targets(chunk)
                    .ok_or(TrainError::EmptyData("gender targets"))?;
                super::loss::multitask_loss(
                    &output.level_logp,
                    gender_logp,
                    &level_targets,
                    &gender_targets,
                    w,
                )?
            }
            _ => nll_loss(&output.level_logp, &level_targets)?.0,
        };
        loss_sum += loss * chunk.len() as f64;
        for (row, &target) in output.level_logp.rows().into_iter().zip(&level_targets) {
            let mut best = 0usize;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            if best == target {
                correct += 1;
            }
        }
    }
    Ok((loss_sum / data.len() as f64, correct as f64 / data.len() as f64))
}

/// Evaluation-mode level predictions (argmax of the level head).
pub fn predict(
    model: &mut dyn TrainableClassifier,
    data: &Dataset,
    batch_size: usize,
) -> Result<Vec<usize>> {
    if data.is_empty() {
        return Err(TrainError::EmptyData("prediction set"));
    }
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in indices.chunks(batch_size.max(1)) {
        let batch = data.batch(chunk)?;
        let output = model.forward(&batch, Mode::Eval)?;
        for row in output.level_logp.rows() {
            let mut best = 0usize;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            out.push(best);
        }
    }
    Ok(out)
}

/// History file: `epoch,train_loss,val_loss,val_acc,lr` per line.
pub fn write_history_csv(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("epoch,train_loss,val_loss,val_acc,lr\n");
    for r in history {
        out.push_str(&format!(
            "{},{:.9},{:.9},{:.6},{:.9}\n",
            r.epoch, r.train_loss, r.val_loss, r.val_accuracy, r.lr
        ));
    }
    std::fs::write(path, out).map_err(|source| TrainError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopper_follows_the_patience_rule() {
        // strictly improving for 15 epochs, then flat: stop after 10
        // flat epochs with the best at epoch 14 (0-based)
        let mut stopper = EarlyStopper::new(10);
        let mut stopped_at = None;
        for epoch in 0..100 {
            let val = if epoch < 15 { 100.0 - epoch as f64 } else { 86.0 };
            let (_, stop) = stopper.observe(epoch, val);
            if stop {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(24)); // 25 epochs ran: 0..=24
        assert_eq!(stopper.best_epoch, 14);
        assert_eq!(stopper.best, 86.0);
    }

    #[test]
    fn checkpoint_epoch_has_the_minimum_validation_loss() {
        let mut stopper = EarlyStopper::new(3);
        let losses = [5.0, 3.0, 4.0, 2.5, 2.6, 2.7, 2.8];
        for (e, &l) in losses.iter().enumerate() {
            let (_, stop) = stopper.observe(e, l);
            if stop {
                break;
            }
        }
        assert_eq!(stopper.best_epoch, 3);
        assert_eq!(stopper.best, 2.5);
    }
}

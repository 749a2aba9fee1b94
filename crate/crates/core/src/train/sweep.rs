//! Token-length sweep: accuracy of the text-model families at input
//! lengths 10..=90 tokens.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::{Essay, LevelScheme};
use crate::models::{
    svm_fit, truncate_tokens, FinetuneTextModel, Mlp, MlpConfig, SimTextEncoder, SvmConfig,
    TextEncoderAdapter,
};
use crate::splits::SplitAssignment;
use crate::util::derive_seed;

use super::dataset::{Dataset, SampleInput};
use super::optimizer::LrMap;
use super::schedule::TrainSchedule;
use super::train_loop::{predict, train};
use super::{Result, TrainError};

/// The canonical sweep grid.
pub const TOKEN_LENGTH_GRID: [usize; 9] = [10, 20, 30, 40, 50, 60, 70, 80, 90];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepFamily {
    Svm,
    Mlp,
    Finetuned,
}

impl SweepFamily {
    pub fn name(&self) -> &'static str {
        match self {
            SweepFamily::Svm => "svm",
            SweepFamily::Mlp => "mlp",
            SweepFamily::Finetuned => "finetuned",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub lengths: Vec<usize>,
    /// family name -> test accuracy per length.
    pub rows: BTreeMap<String, Vec<f64>>,
}

pub struct SweepSpec<'a> {
    pub essays: Vec<&'a Essay>,
    pub scheme: &'a LevelScheme,
    pub split: &'a SplitAssignment,
    pub encoder: &'a SimTextEncoder,
    pub svm_config: SvmConfig,
    pub mlp_schedule: TrainSchedule,
    pub finetune_schedule: TrainSchedule,
    pub seed: u64,
}

/// Runs the token-length sweep for the requested families.
///
/// Every family at every length trains (or fits) on the split's train
/// essays, with validation-based early stopping where the family trains
/// iteratively, and reports accuracy on the test essays once.
pub fn token_length_sweep(
    spec: &SweepSpec,
    families: &[SweepFamily],
    lengths: &[usize],
) -> Result<SweepResult> {
    if lengths != TOKEN_LENGTH_GRID {
        return Err(TrainError::SweepGridMutated {
            expected: TOKEN_LENGTH_GRID.to_vec(),
            got: lengths.to_vec(),
        });
    }
    let mut seen = std::collections::BTreeSet::new();
    if families.is_empty() || !families.iter().all(|f| seen.insert(*f)) {
        return Err(TrainError::BadFamilyList);
    }

    // tokenize once; truncate per length
    let tokens: Vec<Vec<u32>> = spec
        .essays
        .iter()
        .map(|e| spec.encoder.tokenize(&e.text))
        .collect();
    let mut labels: Vec<usize> = Vec::with_capacity(spec.essays.len());
    for e in &spec.essays {
        let label = if spec.scheme.name == "efcamdat_raw" {
            crate::corpus::LevelLabel::new(e.raw_level.to_string())
        } else {
            e.cefr_level.clone()
        };
        labels.push(spec.scheme.index_of(&label)?);
    }

    let part_of = |id: &str| -> Option<&'static str> {
        if spec.split.train.contains(id) {
            Some("train")
        } else if spec.split.val.contains(id) {
            Some("val")
        } else if spec.split.test.contains(id) {
            Some("test")
        } else {
            None
        }
    };

    let num_classes = spec.scheme.num_classes();
    let dim = spec.encoder.dim;
    let mut rows: BTreeMap<String, Vec<f64>> = BTreeMap::new();

    for &length in lengths {
        let truncated: Vec<Vec<u32>> = tokens.iter().map(|t| truncate_tokens(t, length)).collect();

        // pooled embeddings for the frozen-encoder families
        let mut embedded: Vec<ndarray::Array1<f64>> = Vec::with_capacity(truncated.len());
        for t in &truncated {
            embedded.push(spec.encoder.pooled_output(t)?);
        }

        for family in families {
            let accuracy = match family {
                SweepFamily::Svm => {
                    let (mut x_rows, mut y_train) = (Vec::new(), Vec::new());
                    let (mut t_rows, mut y_test) = (Vec::new(), Vec::new());
                    for (i, e) in spec.essays.iter().enumerate() {
                        match part_of(&e.id) {
                            Some("train") => {
                                x_rows.push(embedded[i].clone());
                                y_train.push(labels[i]);
                            }
                            Some("test") => {
                                t_rows.push(embedded[i].clone());
                                y_test.push(labels[i]);
                            }
                            _ => {}
                        }
                    }
                    let x = stack_rows(&x_rows, dim);
                    let t = stack_rows(&t_rows, dim);
                    let mut cfg = spec.svm_config.clone();
                    cfg.seed = derive_seed(spec.seed, &format!("svm:{length}"));
                    let model = svm_fit(&x, &y_train, &cfg)?;
                    let predictions = model.predict(&t);
                    super::metrics::evaluate(&predictions, &y_test, num_classes)?.accuracy
                }
                SweepFamily::Mlp => {
                    let (train_ds, val_ds, test_ds) = split_datasets(
                        spec,
                        &labels,
                        |i| SampleInput::Vector(embedded[i].clone()),
                        part_of,
                    );
                    let mut schedule = spec.mlp_schedule.clone();
                    schedule.seed = derive_seed(spec.seed, &format!("mlp:{length}"));
                    let mut model = Mlp::new(MlpConfig {
                        layer_sizes: (dim, 128, num_classes),
                        dropout_p: 0.2,
                        seed: schedule.seed,
                    });
                    train(&mut model, &train_ds, &val_ds, &schedule, &LrMap::default(), None)?;
                    let predictions = predict(&mut model, &test_ds, schedule.batch_size)?;
                    super::metrics::evaluate(&predictions, &test_ds.levels, num_classes)?.accuracy
                }
                SweepFamily::Finetuned => {
                    let (train_ds, val_ds, test_ds) = split_datasets(
                        spec,
                        &labels,
                        |i| SampleInput::Tokens(truncated[i].clone()),
                        part_of,
                    );
                    let mut schedule = spec.finetune_schedule.clone();
                    schedule.seed = derive_seed(spec.seed, &format!("finetuned:{length}"));
                    let fresh = spec.encoder.spawn();
                    let mut mask = vec![false; fresh.num_layers()];
                    if let Some(last) = mask.last_mut() {
                        *last = true;
                    }
                    let mut model = FinetuneTextModel::new(
                        fresh,
                        &mask,
                        MlpConfig {
                            layer_sizes: (dim, 128, num_classes),
                            dropout_p: 0.2,
                            seed: schedule.seed,
                        },
                    )?;
                    train(&mut model, &train_ds, &val_ds, &schedule, &LrMap::default(), None)?;
                    let predictions = predict(&mut model, &test_ds, schedule.batch_size)?;
                    super::metrics::evaluate(&predictions, &test_ds.levels, num_classes)?.accuracy
                }
            };
            rows.entry(family.name().to_string()).or_default().push(accuracy);
        }
    }

    Ok(SweepResult {
        lengths: lengths.to_vec(),
        rows,
    })
}

fn stack_rows(rows: &[ndarray::Array1<f64>], dim: usize) -> Array2<f64> {
    let mut x = Array2::zeros((rows.len(), dim));
    for (i, r) in rows.iter().enumerate() {
        x.row_mut(i).assign(r);
    }
    x
}

fn split_datasets(
    spec: &SweepSpec,
    labels: &[usize],
    mut make_input: impl FnMut(usize) -> SampleInput,
    part_of: impl Fn(&str) -> Option<&'static str>,
) -> (Dataset, Dataset, Dataset) {
    let mut train_ds = Dataset::default();
    let mut val_ds = Dataset::default();
    let mut test_ds = Dataset::default();
    for (i, e) in spec.essays.iter().enumerate() {
        let input = make_input(i);
        match part_of(&e.id) {
            Some("train") => train_ds.push(e.id.clone(), input, labels[i], None),
            Some("val") => val_ds.push(e.id.clone(), input, labels[i], None),
            Some("test") => test_ds.push(e.id.clone(), input, labels[i], None),
            _ => {}
        }
    }
    (train_ds, val_ds, test_ds)
}

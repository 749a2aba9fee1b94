//! In-memory datasets: per-sample inputs with level (and optional
//! gender) targets, collated into model batches.

use ndarray::{Array2, Array3, Array4};

use crate::dsp::AudioClip;
use crate::models::BatchInput;

use super::{Result, TrainError};

#[derive(Clone, Debug)]
pub enum SampleInput {
    /// (1, time, mel) feature image.
    Image(Array3<f64>),
    Vector(ndarray::Array1<f64>),
    Sequence(Array2<f64>),
    Wave(AudioClip),
    Tokens(Vec<u32>),
}

impl SampleInput {
    fn kind(&self) -> &'static str {
        match self {
            SampleInput::Image(_) => "images",
            SampleInput::Vector(_) => "vectors",
            SampleInput::Sequence(_) => "sequences",
            SampleInput::Wave(_) => "waves",
            SampleInput::Tokens(_) => "tokens",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub inputs: Vec<SampleInput>,
    pub levels: Vec<usize>,
    pub genders: Option<Vec<usize>>,
    /// Item ids, carried for diagnostics (non-finite loss dumps).
    pub ids: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn push(&mut self, id: String, input: SampleInput, level: usize, gender: Option<usize>) {
        self.inputs.push(input);
        self.levels.push(level);
        if let Some(g) = gender {
            self.genders.get_or_insert_with(Vec::new).push(g);
        }
        self.ids.push(id);
    }

    /// Collates the samples at `indices` into one batch.
    pub fn batch(&self, indices: &[usize]) -> Result<BatchInput> {
        let first = self.inputs[indices[0]].kind();
        if indices.iter().any(|&i| self.inputs[i].kind() != first) {
            return Err(TrainError::MixedInputKinds);
        }
        let batch = match &self.inputs[indices[0]] {
            SampleInput::Image(sample0) => {
                let (c, h, w) = sample0.dim();
                let mut x = Array4::zeros((indices.len(), c, h, w));
                for (bi, &i) in indices.iter().enumerate() {
                    let SampleInput::Image(img) = &self.inputs[i] else { unreachable!() };
                    x.index_axis_mut(ndarray::Axis(0), bi).assign(img);
                }
                BatchInput::Images(x)
            }
            SampleInput::Vector(v0) => {
                let mut x = Array2::zeros((indices.len(), v0.len()));
                for (bi, &i) in indices.iter().enumerate() {
                    let SampleInput::Vector(v) = &self.inputs[i] else { unreachable!() };
                    x.row_mut(bi).assign(v);
                }
                BatchInput::Vectors(x)
            }
            SampleInput::Sequence(_) => BatchInput::Sequences(
                indices
                    .iter()
                    .map(|&i| {
                        let SampleInput::Sequence(s) = &self.inputs[i] else { unreachable!() };
                        s.clone()
                    })
                    .collect(),
            ),
            SampleInput::Wave(_) => BatchInput::Waves(
                indices
                    .iter()
                    .map(|&i| {
                        let SampleInput::Wave(w) = &self.inputs[i] else { unreachable!() };
                        w.clone()
                    })
                    .collect(),
            ),
            SampleInput::Tokens(_) => BatchInput::Tokens(
                indices
                    .iter()
                    .map(|&i| {
                        let SampleInput::Tokens(t) = &self.inputs[i] else { unreachable!() };
                        t.clone()
                    })
                    .collect(),
            ),
        };
        Ok(batch)
    }

    pub fn level_targets(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.levels[i]).collect()
    }

    pub fn gender_targets(&self, indices: &[usize]) -> Option<Vec<usize>> {
        self.genders
            .as_ref()
            .map(|g| indices.iter().map(|&i| g[i]).collect())
    }

    pub fn batch_ids(&self, indices: &[usize]) -> Vec<String> {
        indices.iter().map(|&i| self.ids[i].clone()).collect()
    }
}

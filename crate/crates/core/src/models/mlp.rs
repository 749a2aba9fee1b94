//! The 3-layer MLP over fixed text embeddings: sizes (768, 128, C) with
//! ReLU and dropout between the affine maps.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Dropout, Linear, LogSoftmax, ReLu};
use super::{BatchInput, Mode, ModelError, ModelOutput, Param, Result, TrainableClassifier};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// (input, hidden, output) sizes.
    pub layer_sizes: (usize, usize, usize),
    pub dropout_p: f64,
    pub seed: u64,
}

impl MlpConfig {
    pub fn default_cefr(seed: u64) -> Self {
        MlpConfig {
            layer_sizes: (768, 128, 5),
            dropout_p: 0.2,
            seed,
        }
    }
}

pub struct Mlp {
    pub config: MlpConfig,
    l1: Linear,
    relu: ReLu,
    dropout: Dropout,
    l2: Linear,
    logsoftmax: LogSoftmax,
}

impl Mlp {
    pub fn new(config: MlpConfig) -> Self {
        let (d_in, d_hidden, d_out) = config.layer_sizes;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Mlp {
            l1: Linear::new("mlp.l1", "classifier", d_in, d_hidden, &mut rng),
            relu: ReLu::new(),
            dropout: Dropout::new(config.dropout_p, crate::util::derive_seed(config.seed, "mlp-dropout")),
            l2: Linear::new("mlp.l2", "classifier", d_hidden, d_out, &mut rng),
            logsoftmax: LogSoftmax::new(),
            config,
        }
    }

    pub fn forward_vectors(&mut self, x: &Array2<f64>, mode: Mode) -> Result<Array2<f64>> {
        if x.ncols() != self.config.layer_sizes.0 {
            return Err(ModelError::ShapeMismatch(format!(
                "mlp expects {} input features, got {}",
                self.config.layer_sizes.0,
                x.ncols()
            )));
        }
        let y = self.l1.forward(x, mode);
        let y = self.relu.forward(&y.into_dyn(), mode);
        let y = self.dropout.forward(&y, mode);
        let y = self.l2.forward(&y.into_dimensionality().expect("2d"), mode);
        Ok(self.logsoftmax.forward(&y, mode))
    }

    /// Full backward pass returning the gradient on the input vectors,
    /// for composites that keep propagating (encoder fine-tuning).
    pub fn backward_vectors(&mut self, dlevel: &Array2<f64>) -> Array2<f64> {
        let g = self.logsoftmax.backward(dlevel);
        let g = self.l2.backward(&g);
        let g = self.dropout.backward(&g.into_dyn());
        let g = self.relu.backward(&g);
        self.l1.backward(&g.into_dimensionality().expect("2d"))
    }
}

impl TrainableClassifier for Mlp {
    fn forward(&mut self, batch: &BatchInput, mode: Mode) -> Result<ModelOutput> {
        let BatchInput::Vectors(x) = batch else {
            return Err(ModelError::WrongInputKind {
                expected: "vectors",
                got: batch.kind(),
            });
        };
        Ok(ModelOutput {
            level_logp: self.forward_vectors(x, mode)?,
            gender_logp: None,
        })
    }

    fn backward(&mut self, dlevel: &Array2<f64>, _dgender: Option<&Array2<f64>>) {
        let _ = self.backward_vectors(dlevel);
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.l1.params_mut();
        p.extend(self.l2.params_mut());
        p
    }

    fn reseed_dropout(&mut self, salt: u64) {
        self.dropout
            .reseed(crate::util::derive_seed(salt, "mlp-dropout"));
    }
}

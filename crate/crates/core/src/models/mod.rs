//! Classifier architectures with exact manual backpropagation.
//!
//! Everything trains in `f64` so analytic gradients can be checked
//! against central finite differences to tight tolerances. Parameters
//! are plain arrays; each layer caches whatever its backward pass needs.

mod checkpoint;
mod cnn;
pub mod gradcheck;
mod layers;
mod lstm;
mod mlp;
mod param;
mod resnet;
mod speech;
mod svm;
mod text;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use cnn::{cnn_head_spatial, Cnn2d, Cnn2dConfig, ConvBlockConfig, FreqCnnConfig};
pub use layers::{
    BatchNorm1d, BatchNorm2d, Conv2d, Dropout, LeakyReLu, Linear, LogSoftmax, MaxPool2d, ReLu,
};
pub use lstm::{BilstmAttn, BilstmAttnConfig};
pub use mlp::{Mlp, MlpConfig};
pub use param::{Param, ParamInit};
pub use resnet::{resnet_shape_chain, ResBlock, ResNet, ResNetConfig};
pub use speech::{
    encode_and_pool, multitask_forward, ClassifierHead, ClassifierHeadConfig, ConstantEncoder,
    EncoderInfo, MultiTaskModel, PoolingKind, SimSpeechEncoder, SpeechEncoder,
    SpeechEncoderConfig,
};
pub use svm::{svm_fit, SvmConfig, SvmKernel, SvmMode, SvmModel};
pub use text::{
    truncate_tokens, FinetuneTextModel, SimTextEncoder, TextEncoderAdapter, TextEncoderInfo,
    TokenId,
};

use ndarray::Array2;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Error, Debug)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("encoder adapter {adapter} failed: {message}")]
    AdapterFailure { adapter: String, message: String },
    #[error("encoder produced zero-length output")]
    EmptyEncoderOutput,
    #[error("empty sequence at batch position {0}")]
    EmptySequence(usize),
    #[error("training data contains a single class")]
    SingleClass,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("batch input kind {got} does not match model input {expected}")]
    WrongInputKind {
        expected: &'static str,
        got: &'static str,
    },
}

/// Forward-pass mode; dropout and batch-norm statistics differ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One batch of model inputs.
#[derive(Clone, Debug)]
pub enum BatchInput {
    /// (batch, channels, time, mel)
    Images(ndarray::Array4<f64>),
    /// (batch, dim) fixed-size embeddings
    Vectors(Array2<f64>),
    /// Variable-length token-embedding sequences, one (T_i, dim) each
    Sequences(Vec<Array2<f64>>),
    /// Raw 16 kHz waveforms
    Waves(Vec<crate::dsp::AudioClip>),
    /// Token-id sequences, for models that embed text themselves
    Tokens(Vec<Vec<u32>>),
}

impl BatchInput {
    pub fn kind(&self) -> &'static str {
        match self {
            BatchInput::Images(_) => "images",
            BatchInput::Vectors(_) => "vectors",
            BatchInput::Sequences(_) => "sequences",
            BatchInput::Waves(_) => "waves",
            BatchInput::Tokens(_) => "tokens",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            BatchInput::Images(x) => x.shape()[0],
            BatchInput::Vectors(x) => x.nrows(),
            BatchInput::Sequences(x) => x.len(),
            BatchInput::Waves(x) => x.len(),
            BatchInput::Tokens(x) => x.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-sample model output as log-probabilities.
#[derive(Clone, Debug)]
pub struct ModelOutput {
    pub level_logp: Array2<f64>,
    pub gender_logp: Option<Array2<f64>>,
}

/// Uniform interface the training loop drives.
pub trait TrainableClassifier {
    fn forward(&mut self, batch: &BatchInput, mode: Mode) -> Result<ModelOutput>;
    /// Accumulates parameter gradients given output gradients. Must be
    /// called right after a `Train` forward on the same batch.
    fn backward(&mut self, dlevel: &Array2<f64>, dgender: Option<&Array2<f64>>);
    fn params_mut(&mut self) -> Vec<&mut Param>;
    /// Re-seeds stochastic layers (dropout) for reproducible epochs.
    fn reseed_dropout(&mut self, salt: u64);

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn snapshot(&mut self) -> Vec<ndarray::ArrayD<f64>> {
        self.params_mut().iter().map(|p| p.value.clone()).collect()
    }

    fn restore(&mut self, snapshot: &[ndarray::ArrayD<f64>]) {
        for (p, s) in self.params_mut().into_iter().zip(snapshot) {
            p.value.assign(s);
        }
    }
}

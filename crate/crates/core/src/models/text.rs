//! Text-encoder adapter interface, the deterministic stub encoder used
//! for tests and offline runs, token truncation, and the composite model
//! that fine-tunes unmasked encoder layers together with an MLP head.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpConfig};
use super::param::Param;
use super::{BatchInput, Mode, ModelError, ModelOutput, Result, TrainableClassifier};

pub type TokenId = u32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextEncoderInfo {
    pub id: String,
    pub dim: usize,
    pub num_layers: usize,
    pub fine_tunable: bool,
}

/// Interface to a text encoder with a subword tokenizer.
///
/// `tokenize` returns content tokens; the encoder itself wraps the
/// sequence in its leading/trailing special tokens, so truncation of the
/// content never loses either special token.
pub trait TextEncoderAdapter: Send + Sync {
    fn info(&self) -> TextEncoderInfo;
    fn tokenize(&self, text: &str) -> Vec<TokenId>;
    /// (content_len + 2, dim) contextual outputs, deterministic in
    /// evaluation mode.
    fn sequence_output(&self, tokens: &[TokenId]) -> Result<Array2<f64>>;
    /// Sequence-level embedding: the mean over `sequence_output` rows.
    fn pooled_output(&self, tokens: &[TokenId]) -> Result<Array1<f64>> {
        let seq = self.sequence_output(tokens)?;
        if seq.nrows() == 0 {
            return Err(ModelError::EmptyEncoderOutput);
        }
        Ok(seq.mean_axis(ndarray::Axis(0)).expect("non-empty"))
    }
}

/// Keeps the first `min(len, max_tokens)` content tokens.
pub fn truncate_tokens(tokens: &[TokenId], max_tokens: usize) -> Vec<TokenId> {
    tokens[..tokens.len().min(max_tokens)].to_vec()
}

const CLS: TokenId = 0;
const SEP: TokenId = 1;
const VOCAB: u32 = 1 << 20;

/// Deterministic stand-in for a frozen pretrained text encoder: hashed
/// subword-style tokenizer, seeded pseudo-random token embeddings, and a
/// stack of per-dimension tanh layers whose parameters can be selectively
/// unfrozen for fine-tuning.
pub struct SimTextEncoder {
    pub dim: usize,
    /// Each layer is y = tanh(scale * x + shift), elementwise.
    pub layer_scale: Vec<Param>,
    pub layer_shift: Vec<Param>,
    seed: u64,
    // per sequence, per layer: (input, output) of y = tanh(scale*x + shift)
    caches: Vec<Vec<(Array2<f64>, Array2<f64>)>>,
    embed_cache: std::sync::Mutex<std::collections::BTreeMap<TokenId, Array1<f64>>>,
}

impl SimTextEncoder {
    pub fn new(dim: usize, num_layers: usize, seed: u64) -> Self {
        let mut layer_scale = Vec::with_capacity(num_layers);
        let mut layer_shift = Vec::with_capacity(num_layers);
        let mut rng = ChaCha8Rng::seed_from_u64(crate::util::derive_seed(seed, "text-layers"));
        for l in 0..num_layers {
            let scale = Array1::from_shape_fn(dim, |_| 1.0 + rng.random_range(-0.05..0.05));
            let shift = Array1::from_shape_fn(dim, |_| rng.random_range(-0.05..0.05));
            layer_scale.push(
                Param::from_value(
                    format!("encoder.layer{l}.scale"),
                    format!("encoder.layer{l}"),
                    scale.into_dyn(),
                )
                .frozen(),
            );
            layer_shift.push(
                Param::from_value(
                    format!("encoder.layer{l}.shift"),
                    format!("encoder.layer{l}"),
                    shift.into_dyn(),
                )
                .frozen(),
            );
        }
        SimTextEncoder {
            dim,
            layer_scale,
            layer_shift,
            seed,
            caches: Vec::new(),
            embed_cache: std::sync::Mutex::new(std::collections::BTreeMap::new()),
        }
    }

    /// A fresh encoder with identical seeds: same embeddings, same
    /// initial layer parameters, all layers frozen again.
    pub fn spawn(&self) -> SimTextEncoder {
        SimTextEncoder::new(self.dim, self.num_layers(), self.seed)
    }

    /// Unfreezes the listed layers (`true` = trainable).
    pub fn set_layer_mask(&mut self, unfrozen: &[bool]) {
        for (l, &open) in unfrozen.iter().enumerate() {
            if l < self.layer_scale.len() {
                self.layer_scale[l].frozen = !open;
                self.layer_shift[l].frozen = !open;
            }
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layer_scale.len()
    }

    fn embedding(&self, token: TokenId) -> Array1<f64> {
        let mut cache = self.embed_cache.lock().expect("embed cache");
        cache
            .entry(token)
            .or_insert_with(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(crate::util::derive_seed(
                    self.seed,
                    &format!("tok:{token}"),
                ));
                Array1::from_shape_fn(self.dim, |_| rng.random_range(-1.0..1.0))
            })
            .clone()
    }

    fn embed_sequence(&self, tokens: &[TokenId]) -> Array2<f64> {
        let mut rows = Array2::zeros((tokens.len() + 2, self.dim));
        rows.row_mut(0).assign(&self.embedding(CLS));
        for (i, &t) in tokens.iter().enumerate() {
            rows.row_mut(i + 1).assign(&self.embedding(t));
        }
        rows.row_mut(tokens.len() + 1).assign(&self.embedding(SEP));
        rows
    }

    fn run_layers(
        &self,
        mut x: Array2<f64>,
        caches: Option<&mut Vec<(Array2<f64>, Array2<f64>)>>,
    ) -> Array2<f64> {
        let mut store: Vec<(Array2<f64>, Array2<f64>)> = Vec::new();
        let dim = self.dim;
        for l in 0..self.num_layers() {
            let scale = self.layer_scale[l].value.as_slice().expect("contiguous");
            let shift = self.layer_shift[l].value.as_slice().expect("contiguous");
            let mut y = x.clone();
            for row in y.as_slice_mut().expect("contiguous").chunks_exact_mut(dim) {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = (*v * scale[j] + shift[j]).tanh();
                }
            }
            if caches.is_some() {
                store.push((x, y.clone()));
            }
            x = y;
        }
        if let Some(caches) = caches {
            *caches = store;
        }
        x
    }

    /// Trainable forward pass over a batch of token sequences, caching
    /// per-layer pre-activations for backprop.
    pub fn forward_batch(&mut self, sequences: &[Vec<TokenId>], mode: Mode) -> Vec<Array2<f64>> {
        self.caches.clear();
        let mut outputs = Vec::with_capacity(sequences.len());
        for tokens in sequences {
            let embedded = self.embed_sequence(tokens);
            let mut cache = Vec::new();
            let out = self.run_layers(embedded, Some(&mut cache));
            if mode == Mode::Train {
                self.caches.push(cache);
            }
            outputs.push(out);
        }
        outputs
    }

    /// Backprop for the most recent `forward_batch`; `dout[i]` is the
    /// gradient on sequence i's final states.
    pub fn backward_batch(&mut self, douts: &[Array2<f64>]) {
        let caches = std::mem::take(&mut self.caches);
        let dim = self.dim;
        for (cache, dout) in caches.iter().zip(douts) {
            let mut g = dout.clone();
            for l in (0..self.num_layers()).rev() {
                let (x_in, y_out) = &cache[l];
                let scale = self.layer_scale[l].value.as_slice().expect("contiguous").to_vec();
                {
                    let gs = g.as_slice_mut().expect("contiguous");
                    let ys = y_out.as_slice().expect("contiguous");
                    for (gv, &y) in gs.iter_mut().zip(ys) {
                        *gv *= 1.0 - y * y; // through tanh via the cached output
                    }
                }
                {
                    let dscale = self.layer_scale[l].grad.as_slice_mut().expect("contiguous");
                    let dshift = self.layer_shift[l].grad.as_slice_mut().expect("contiguous");
                    let gs = g.as_slice().expect("contiguous");
                    let xs = x_in.as_slice().expect("contiguous");
                    for (grow, xrow) in gs.chunks_exact(dim).zip(xs.chunks_exact(dim)) {
                        for j in 0..dim {
                            dscale[j] += grow[j] * xrow[j];
                            dshift[j] += grow[j];
                        }
                    }
                }
                for row in g.as_slice_mut().expect("contiguous").chunks_exact_mut(dim) {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v *= scale[j];
                    }
                }
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layer_scale
            .iter_mut()
            .chain(self.layer_shift.iter_mut())
            .collect()
    }
}

impl TextEncoderAdapter for SimTextEncoder {
    fn info(&self) -> TextEncoderInfo {
        TextEncoderInfo {
            id: "sim-text-encoder".to_string(),
            dim: self.dim,
            num_layers: self.num_layers(),
            fine_tunable: true,
        }
    }

    fn tokenize(&self, text: &str) -> Vec<TokenId> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(|w| {
                let h = crate::util::derive_seed(0x7e87, &w.to_lowercase());
                2 + (h % (VOCAB as u64 - 2)) as u32
            })
            .collect()
    }

    fn sequence_output(&self, tokens: &[TokenId]) -> Result<Array2<f64>> {
        Ok(self.run_layers(self.embed_sequence(tokens), None))
    }
}

/// Fine-tuning composite: encoder layers (frozen except where the mask
/// opens them) feeding mean-pooled states into an MLP classifier.
pub struct FinetuneTextModel {
    pub encoder: SimTextEncoder,
    pub mlp: Mlp,
    step_counts: Vec<usize>,
}

impl FinetuneTextModel {
    pub fn new(mut encoder: SimTextEncoder, unfrozen_layer_mask: &[bool], mlp_config: MlpConfig) -> Result<Self> {
        if !encoder.info().fine_tunable {
            return Err(ModelError::InvalidConfig(
                "adapter does not support fine-tuning".to_string(),
            ));
        }
        if mlp_config.layer_sizes.0 != encoder.dim {
            return Err(ModelError::ShapeMismatch(format!(
                "mlp input {} vs encoder dim {}",
                mlp_config.layer_sizes.0, encoder.dim
            )));
        }
        encoder.set_layer_mask(unfrozen_layer_mask);
        Ok(FinetuneTextModel {
            encoder,
            mlp: Mlp::new(mlp_config),
            step_counts: Vec::new(),
        })
    }

    pub fn forward_tokens(&mut self, batch: &[Vec<TokenId>], mode: Mode) -> Result<Array2<f64>> {
        let states = self.encoder.forward_batch(batch, mode);
        self.step_counts = states.iter().map(|s| s.nrows()).collect();
        let mut pooled = Array2::zeros((batch.len(), self.encoder.dim));
        for (i, s) in states.iter().enumerate() {
            pooled
                .row_mut(i)
                .assign(&s.mean_axis(ndarray::Axis(0)).expect("non-empty"));
        }
        self.mlp.forward_vectors(&pooled, mode)
    }

    fn pooled_grad_to_encoder(&mut self, dpooled: &Array2<f64>) {
        let douts: Vec<Array2<f64>> = self
            .step_counts
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let mut d = Array2::zeros((t, self.encoder.dim));
                for ti in 0..t {
                    for j in 0..self.encoder.dim {
                        d[[ti, j]] = dpooled[[i, j]] / t as f64;
                    }
                }
                d
            })
            .collect();
        self.encoder.backward_batch(&douts);
    }

    /// Checksums of every frozen parameter, for the invariance tests.
    pub fn frozen_checksums(&mut self) -> Vec<(String, String)> {
        self.encoder
            .params_mut()
            .iter()
            .filter(|p| p.frozen)
            .map(|p| (p.name.clone(), p.checksum()))
            .collect()
    }
}

impl TrainableClassifier for FinetuneTextModel {
    fn forward(&mut self, batch: &BatchInput, mode: Mode) -> Result<ModelOutput> {
        let BatchInput::Tokens(tokens) = batch else {
            return Err(ModelError::WrongInputKind {
                expected: "tokens",
                got: batch.kind(),
            });
        };
        Ok(ModelOutput {
            level_logp: self.forward_tokens(tokens, mode)?,
            gender_logp: None,
        })
    }

    fn backward(&mut self, dlevel: &Array2<f64>, _dgender: Option<&Array2<f64>>) {
        let dpooled = self.mlp.backward_vectors(dlevel);
        self.pooled_grad_to_encoder(&dpooled);
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.encoder.params_mut();
        p.extend(self.mlp.params_mut());
        p
    }

    fn reseed_dropout(&mut self, salt: u64) {
        self.mlp.reseed_dropout(salt);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_is_a_prefix_and_short_inputs_pass_through() {
        let tokens: Vec<TokenId> = (100..220).collect();
        let cut = truncate_tokens(&tokens, 60);
        assert_eq!(cut.len(), 60);
        assert_eq!(&cut[..], &tokens[..60]);

        let short: Vec<TokenId> = (0..8).collect();
        assert_eq!(truncate_tokens(&short, 60), short);
    }

    #[test]
    fn tokenizer_is_deterministic_and_case_insensitive() {
        let enc = SimTextEncoder::new(16, 2, 9);
        let a = enc.tokenize("Hello world, hello!");
        let b = enc.tokenize("hello World, HELLO!");
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert_eq!(a[0], a[2]);
    }

    #[test]
    fn sequence_output_includes_both_special_positions() {
        let enc = SimTextEncoder::new(16, 2, 9);
        let tokens = enc.tokenize("one two three");
        let seq = enc.sequence_output(&tokens).unwrap();
        assert_eq!(seq.nrows(), tokens.len() + 2);
        assert_eq!(seq.ncols(), 16);
    }

    #[test]
    fn pooled_output_is_the_row_mean() {
        let enc = SimTextEncoder::new(8, 1, 3);
        let tokens = enc.tokenize("alpha beta");
        let seq = enc.sequence_output(&tokens).unwrap();
        let pooled = enc.pooled_output(&tokens).unwrap();
        for j in 0..8 {
            let mean = seq.column(j).sum() / seq.nrows() as f64;
            assert!((pooled[j] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_mask_controls_frozen_flags() {
        let mut enc = SimTextEncoder::new(8, 3, 3);
        enc.set_layer_mask(&[false, false, true]);
        let frozen: Vec<bool> = enc.params_mut().iter().map(|p| p.frozen).collect();
        // scales then shifts, layer-major
        assert_eq!(frozen, vec![true, true, false, true, true, false]);
    }
}

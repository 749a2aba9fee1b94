//! Pretrained-speech-encoder wrapper: adapter interface, statistics
//! pooling, dual-layer classifier heads, and the multi-task model that
//! fine-tunes an encoder while its feature extractor stays frozen.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::AudioClip;

use super::layers::{BatchNorm1d, Dropout, LeakyReLu, Linear, LogSoftmax};
use super::{BatchInput, Mode, ModelError, ModelOutput, Param, Result, TrainableClassifier};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderInfo {
    pub id: String,
    pub dim: usize,
    pub feature_extractor_frozen: bool,
}

/// Interface to a pretrained speech encoder producing per-step
/// contextual vectors.
pub trait SpeechEncoder: Send + Sync {
    fn info(&self) -> EncoderInfo;
    /// (T, dim) contextual outputs for a 16 kHz clip.
    fn encode(&self, clip: &AudioClip) -> Result<Array2<f64>>;
}

/// Emits the same vector at every time step; the stub encoder used in
/// tests and registry smoke checks.
pub struct ConstantEncoder {
    pub vector: Array1<f64>,
    /// Steps per second of audio.
    pub steps_per_second: f64,
}

impl ConstantEncoder {
    pub fn new(dim: usize, value: f64) -> Self {
        ConstantEncoder {
            vector: Array1::from_elem(dim, value),
            steps_per_second: 50.0,
        }
    }

    pub fn from_vector(vector: Array1<f64>) -> Self {
        ConstantEncoder {
            vector,
            steps_per_second: 50.0,
        }
    }
}

impl SpeechEncoder for ConstantEncoder {
    fn info(&self) -> EncoderInfo {
        EncoderInfo {
            id: "constant-encoder".to_string(),
            dim: self.vector.len(),
            feature_extractor_frozen: true,
        }
    }

    fn encode(&self, clip: &AudioClip) -> Result<Array2<f64>> {
        let steps = ((clip.duration_s() * self.steps_per_second).round() as usize).max(1);
        let mut out = Array2::zeros((steps, self.vector.len()));
        for mut row in out.rows_mut() {
            row.assign(&self.vector);
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingKind {
    /// Mean over the encoder's time axis.
    Mean,
    /// Mean concatenated with per-dim std; ablation flag, doubles the dim.
    MeanStd,
}

/// Statistics pooling of encoder outputs into one utterance vector per clip.
pub fn encode_and_pool(
    clips: &[AudioClip],
    encoder: &dyn SpeechEncoder,
    pooling: PoolingKind,
) -> Result<Array2<f64>> {
    let dim = encoder.info().dim;
    let out_dim = match pooling {
        PoolingKind::Mean => dim,
        PoolingKind::MeanStd => 2 * dim,
    };
    let mut pooled = Array2::zeros((clips.len(), out_dim));
    for (i, clip) in clips.iter().enumerate() {
        let states = encoder.encode(clip)?;
        if states.nrows() == 0 {
            return Err(ModelError::EmptyEncoderOutput);
        }
        let mean = states.mean_axis(ndarray::Axis(0)).expect("non-empty");
        match pooling {
            PoolingKind::Mean => pooled.row_mut(i).assign(&mean),
            PoolingKind::MeanStd => {
                let t = states.nrows() as f64;
                for j in 0..dim {
                    let var = states
                        .column(j)
                        .iter()
                        .map(|v| (v - mean[j]) * (v - mean[j]))
                        .sum::<f64>()
                        / t;
                    pooled[[i, j]] = mean[j];
                    pooled[[i, dim + j]] = var.sqrt();
                }
            }
        }
    }
    Ok(pooled)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHeadConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
}

/// Dual-layer head: affine -> LeakyReLU -> batch norm -> affine ->
/// log-softmax.
pub struct ClassifierHead {
    l1: Linear,
    act: LeakyReLu,
    bn: BatchNorm1d,
    l2: Linear,
    logsoftmax: LogSoftmax,
}

impl ClassifierHead {
    pub fn new(name: &str, group: &str, cfg: &ClassifierHeadConfig, rng: &mut ChaCha8Rng) -> Self {
        ClassifierHead {
            l1: Linear::new(&format!("{name}.l1"), group, cfg.input_dim, cfg.hidden_dim, rng),
            act: LeakyReLu::new(0.01),
            bn: BatchNorm1d::new(&format!("{name}.bn"), group, cfg.hidden_dim, rng),
            l2: Linear::new(&format!("{name}.l2"), group, cfg.hidden_dim, cfg.num_classes, rng),
            logsoftmax: LogSoftmax::new(),
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>, mode: Mode) -> Array2<f64> {
        let y = self.l1.forward(x, mode);
        let y = self.act.forward(&y.into_dyn(), mode);
        let y = self.bn.forward(&y.into_dimensionality().expect("2d"), mode);
        let y = self.l2.forward(&y, mode);
        self.logsoftmax.forward(&y, mode)
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let g = self.logsoftmax.backward(dy);
        let g = self.l2.backward(&g);
        let g = self.bn.backward(&g);
        let g = self.act.backward(&g.into_dyn());
        self.l1.backward(&g.into_dimensionality().expect("2d"))
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.l1.params_mut();
        p.extend(self.bn.params_mut());
        p.extend(self.l2.params_mut());
        p
    }
}

/// Applies the level and gender heads to pooled utterance vectors.
pub fn multitask_forward(
    pooled: &Array2<f64>,
    level_head: &mut ClassifierHead,
    gender_head: &mut ClassifierHead,
    mode: Mode,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("pooled utterance vectors".to_string()));
    }
    Ok((
        level_head.forward(pooled, mode),
        gender_head.forward(pooled, mode),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeechEncoderConfig {
    pub encoder_id: String,
    pub encoder_dim: usize,
    pub feature_extractor_frozen: bool,
    pub pooling: PoolingKind,
    pub head_hidden_dim: usize,
    pub num_level_classes: usize,
    /// None disables the gender head (single-task model).
    pub num_gender_classes: Option<usize>,
    pub dropout_p: f64,
    pub seed: u64,
    /// Geometry of the built-in sim encoder; shrink for gradient checks.
    pub sim_frame_samples: usize,
    pub sim_frontend_dim: usize,
}

impl Default for SpeechEncoderConfig {
    fn default() -> Self {
        SpeechEncoderConfig {
            encoder_id: "sim-encoder".to_string(),
            encoder_dim: 768,
            feature_extractor_frozen: true,
            pooling: PoolingKind::Mean,
            head_hidden_dim: 256,
            num_level_classes: 3,
            num_gender_classes: Some(2),
            dropout_p: 0.2,
            seed: 0,
            sim_frame_samples: 320,
            sim_frontend_dim: 64,
        }
    }
}

/// A small trainable speech encoder standing in for a pretrained model:
/// a frozen frame-projection "feature extractor" followed by one
/// trainable tanh layer. It serves both as an inference adapter and as
/// the fine-tunable trunk of [`MultiTaskModel`].
pub struct SimSpeechEncoder {
    pub frontend: Linear, // frozen feature extractor
    pub enc: Linear,      // trainable encoder layer
    pub frame_samples: usize,
    pub dim: usize,
    clip_caches: Vec<ClipCache>,
}

struct ClipCache {
    frames: Array2<f64>,
    h_tanh: Array2<f64>,
    enc_pre: Array2<f64>,
}

const SIM_FRONTEND_DIM: usize = 64;
const SIM_FRAME_SAMPLES: usize = 320; // 20 ms at 16 kHz

impl SimSpeechEncoder {
    pub fn new(dim: usize, frozen_extractor: bool, seed: u64) -> Self {
        Self::with_geometry(dim, frozen_extractor, seed, SIM_FRAME_SAMPLES, SIM_FRONTEND_DIM)
    }

    /// Toy geometries for gradient checks.
    pub fn with_geometry(
        dim: usize,
        frozen_extractor: bool,
        seed: u64,
        frame_samples: usize,
        frontend_dim: usize,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut frontend = Linear::new(
            "encoder.extractor",
            "encoder.extractor",
            frame_samples,
            frontend_dim,
            &mut rng,
        );
        frontend.w.frozen = frozen_extractor;
        frontend.b.frozen = frozen_extractor;
        let enc = Linear::new("encoder.layer0", "encoder", frontend_dim, dim, &mut rng);
        SimSpeechEncoder {
            frontend,
            enc,
            frame_samples,
            dim,
            clip_caches: Vec::new(),
        }
    }

    fn frames(&self, clip: &AudioClip) -> Result<Array2<f64>> {
        let n_frames = clip.samples.len() / self.frame_samples;
        if n_frames == 0 {
            return Err(ModelError::EmptyEncoderOutput);
        }
        let mut frames = Array2::zeros((n_frames, self.frame_samples));
        for t in 0..n_frames {
            for k in 0..self.frame_samples {
                frames[[t, k]] = clip.samples[t * self.frame_samples + k] as f64;
            }
        }
        Ok(frames)
    }

    /// Trainable forward: (T, dim) states with per-clip caches for the
    /// manual backward pass (a batch runs several forwards before one
    /// backward, so the Linear layers' single-slot caches cannot serve).
    fn forward_states(&mut self, clip: &AudioClip, mode: Mode) -> Result<Array2<f64>> {
        let frames = self.frames(clip)?;
        let h_tanh = self.frontend.forward(&frames, Mode::Eval).mapv(f64::tanh);
        let enc_pre = self.enc.forward(&h_tanh, Mode::Eval);
        let states = enc_pre.mapv(f64::tanh);
        if mode == Mode::Train {
            self.clip_caches.push(ClipCache {
                frames,
                h_tanh,
                enc_pre,
            });
        }
        Ok(states)
    }

    /// Gradient of the clip's pooled mean: accumulate parameter grads
    /// through tanh(enc(tanh(frontend(frames)))) and mean pooling.
    fn backward_clip(&mut self, cache: &ClipCache, dpooled_row: ndarray::ArrayView1<f64>) {
        let t = cache.frames.nrows();
        let mut dstates = Array2::zeros((t, self.dim));
        for ti in 0..t {
            for j in 0..self.dim {
                let th = cache.enc_pre[[ti, j]].tanh();
                dstates[[ti, j]] = dpooled_row[j] / t as f64 * (1.0 - th * th);
            }
        }
        let w_enc = self.enc.w.value.view().into_dimensionality::<ndarray::Ix2>().expect("2d");
        let dw_enc = dstates.t().dot(&cache.h_tanh);
        let db_enc = dstates.sum_axis(ndarray::Axis(0));
        let mut dh = dstates.dot(&w_enc);
        for ((ti, j), g) in dh.indexed_iter_mut() {
            let th = cache.h_tanh[[ti, j]];
            *g *= 1.0 - th * th;
        }
        let dw_front = dh.t().dot(&cache.frames);
        let db_front = dh.sum_axis(ndarray::Axis(0));
        self.enc.w.grad += &dw_enc.into_dyn();
        self.enc.b.grad += &db_enc.into_dyn();
        self.frontend.w.grad += &dw_front.into_dyn();
        self.frontend.b.grad += &db_front.into_dyn();
    }
}

impl SpeechEncoder for SimSpeechEncoder {
    fn info(&self) -> EncoderInfo {
        EncoderInfo {
            id: "sim-encoder".to_string(),
            dim: self.dim,
            feature_extractor_frozen: self.frontend.w.frozen,
        }
    }

    fn encode(&self, clip: &AudioClip) -> Result<Array2<f64>> {
        let frames = self.frames(clip)?;
        let wf = self.frontend.w.value.view().into_dimensionality::<ndarray::Ix2>().expect("2d");
        let bf = self.frontend.b.value.view().into_dimensionality::<ndarray::Ix1>().expect("1d");
        let mut h = frames.dot(&wf.t());
        h += &bf;
        h.mapv_inplace(f64::tanh);
        let we = self.enc.w.value.view().into_dimensionality::<ndarray::Ix2>().expect("2d");
        let be = self.enc.b.value.view().into_dimensionality::<ndarray::Ix1>().expect("1d");
        let mut y = h.dot(&we.t());
        y += &be;
        y.mapv_inplace(f64::tanh);
        Ok(y)
    }
}

/// Speech classifier over pooled encoder states with a level head and an
/// optional gender head. With `encoder: None` it consumes precomputed
/// pooled vectors; with an encoder it fine-tunes end to end while the
/// frozen feature extractor receives zero updates.
pub struct MultiTaskModel {
    pub config: SpeechEncoderConfig,
    pub encoder: Option<SimSpeechEncoder>,
    dropout: Dropout,
    pub level_head: ClassifierHead,
    pub gender_head: Option<ClassifierHead>,
    pooled_cache: Option<Array2<f64>>,
    clip_steps: Vec<usize>,
}

impl MultiTaskModel {
    pub fn new(config: SpeechEncoderConfig, with_encoder: bool) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = with_encoder.then(|| {
            SimSpeechEncoder::with_geometry(
                config.encoder_dim,
                config.feature_extractor_frozen,
                crate::util::derive_seed(config.seed, "sim-encoder"),
                config.sim_frame_samples,
                config.sim_frontend_dim,
            )
        });
        let pooled_dim = match config.pooling {
            PoolingKind::Mean => config.encoder_dim,
            PoolingKind::MeanStd => 2 * config.encoder_dim,
        };
        let head_cfg = ClassifierHeadConfig {
            input_dim: pooled_dim,
            hidden_dim: config.head_hidden_dim,
            num_classes: config.num_level_classes,
        };
        let level_head = ClassifierHead::new("level_head", "classifier", &head_cfg, &mut rng);
        let gender_head = config.num_gender_classes.map(|classes| {
            let cfg = ClassifierHeadConfig {
                input_dim: pooled_dim,
                hidden_dim: config.head_hidden_dim,
                num_classes: classes,
            };
            ClassifierHead::new("gender_head", "classifier", &cfg, &mut rng)
        });
        let dropout = Dropout::new(config.dropout_p, crate::util::derive_seed(config.seed, "head-dropout"));
        Ok(MultiTaskModel {
            config,
            encoder,
            dropout,
            level_head,
            gender_head,
            pooled_cache: None,
            clip_steps: Vec::new(),
        })
    }

    fn pool_waves(&mut self, clips: &[AudioClip], mode: Mode) -> Result<Array2<f64>> {
        let encoder = self.encoder.as_mut().expect("wave input needs an encoder");
        encoder.clip_caches.clear();
        self.clip_steps.clear();
        let mut pooled = Array2::zeros((clips.len(), encoder.dim));
        for (i, clip) in clips.iter().enumerate() {
            let states = encoder.forward_states(clip, mode)?;
            self.clip_steps.push(states.nrows());
            let mean = states.mean_axis(ndarray::Axis(0)).expect("non-empty");
            pooled.row_mut(i).assign(&mean);
        }
        Ok(pooled)
    }
}

impl TrainableClassifier for MultiTaskModel {
    fn forward(&mut self, batch: &BatchInput, mode: Mode) -> Result<ModelOutput> {
        let pooled = match (batch, self.encoder.is_some()) {
            (BatchInput::Waves(clips), true) => self.pool_waves(clips, mode)?,
            (BatchInput::Vectors(v), false) => v.clone(),
            _ => {
                return Err(ModelError::WrongInputKind {
                    expected: if self.encoder.is_some() { "waves" } else { "vectors" },
                    got: batch.kind(),
                })
            }
        };
        let dropped = self
            .dropout
            .forward(&pooled.clone().into_dyn(), mode)
            .into_dimensionality()
            .expect("2d");
        if mode == Mode::Train {
            self.pooled_cache = Some(pooled);
        }
        let level_logp = self.level_head.forward(&dropped, mode);
        let gender_logp = self
            .gender_head
            .as_mut()
            .map(|head| head.forward(&dropped, mode));
        Ok(ModelOutput {
            level_logp,
            gender_logp,
        })
    }

    fn backward(&mut self, dlevel: &Array2<f64>, dgender: Option<&Array2<f64>>) {
        let mut dpooled = self.level_head.backward(dlevel);
        if let (Some(head), Some(dg)) = (self.gender_head.as_mut(), dgender) {
            dpooled += &head.backward(dg);
        }
        let dpooled = self
            .dropout
            .backward(&dpooled.into_dyn())
            .into_dimensionality::<ndarray::Ix2>()
            .expect("2d");
        let _ = self.pooled_cache.take();

        if let Some(encoder) = self.encoder.as_mut() {
            let caches = std::mem::take(&mut encoder.clip_caches);
            for (i, cache) in caches.iter().enumerate() {
                encoder.backward_clip(cache, dpooled.row(i));
            }
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut params = Vec::new();
        if let Some(encoder) = &mut self.encoder {
            params.extend(encoder.frontend.params_mut());
            params.extend(encoder.enc.params_mut());
        }
        params.extend(self.level_head.params_mut());
        if let Some(head) = &mut self.gender_head {
            params.extend(head.params_mut());
        }
        params
    }

    fn reseed_dropout(&mut self, salt: u64) {
        self.dropout
            .reseed(crate::util::derive_seed(salt, "speech-head-dropout"));
    }
}

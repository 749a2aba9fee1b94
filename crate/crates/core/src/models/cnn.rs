//! The 2D CNN and its frequency-axis variant: four conv blocks in
//! conv -> ReLU -> batch-norm -> max-pool -> dropout order, then a fully
//! connected head over log-softmax.

use ndarray::{Array2, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    flatten, time_mean_pool, time_mean_pool_backward, unflatten, BatchNorm2d, Conv2d, Dropout,
    LogSoftmax, MaxPool2d, ReLu,
};
use super::{BatchInput, Mode, ModelError, ModelOutput, Param, Result, TrainableClassifier};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvBlockConfig {
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cnn2dConfig {
    /// Exactly four blocks.
    pub blocks: Vec<ConvBlockConfig>,
    pub use_batchnorm: bool,
    pub pool: (usize, usize),
    pub dropout_p: f64,
    pub num_classes: usize,
    /// (time, mel) geometry the head is sized for.
    pub input_shape: (usize, usize),
    /// Frequency-axis mode: pooling leaves time untouched and the head
    /// sees the time-mean of the final feature map.
    pub time_preserving: bool,
    pub seed: u64,
}

impl Cnn2dConfig {
    /// Channel plan (32, 64, 128, 256) with 3x3 stride-1 same-padding
    /// kernels and 2x2 pooling.
    pub fn default_2d(num_classes: usize, seed: u64) -> Self {
        Cnn2dConfig {
            blocks: [32, 64, 128, 256]
                .iter()
                .map(|&out_channels| ConvBlockConfig {
                    out_channels,
                    kernel: (3, 3),
                    stride: (1, 1),
                    padding: (1, 1),
                })
                .collect(),
            use_batchnorm: true,
            pool: (2, 2),
            dropout_p: 0.25,
            num_classes,
            input_shape: (798, 40),
            time_preserving: false,
            seed,
        }
    }

    /// A small variant for gradient checks and smoke training.
    pub fn toy_2d(num_classes: usize, input_shape: (usize, usize), seed: u64) -> Self {
        let mut cfg = Self::default_2d(num_classes, seed);
        for (block, ch) in cfg.blocks.iter_mut().zip([2, 3, 3, 4]) {
            block.out_channels = ch;
        }
        cfg.input_shape = input_shape;
        cfg
    }

    fn validate(&self) -> Result<()> {
        if self.blocks.len() != 4 {
            return Err(ModelError::InvalidConfig(format!(
                "the architecture uses exactly 4 conv blocks, got {}",
                self.blocks.len()
            )));
        }
        if self.time_preserving {
            for (i, b) in self.blocks.iter().enumerate() {
                if b.kernel.0 != 1 || b.stride.0 != 1 || b.padding.0 != 0 {
                    return Err(ModelError::InvalidConfig(format!(
                        "frequency-axis block {i} must have time extent 1 (kernel ({},{}), \
                         stride ({},{}))",
                        b.kernel.0, b.kernel.1, b.stride.0, b.stride.1
                    )));
                }
            }
            if self.pool.0 != 1 {
                return Err(ModelError::InvalidConfig(
                    "frequency-axis pooling must be (1, k)".to_string(),
                ));
            }
        }
        Ok(())
    }
}

/// Frequency-axis configuration: (1, 3) kernels, (1, 2) pooling, and the
/// head fed by a time-mean. Same channel plan as the 2D CNN.
pub struct FreqCnnConfig;

impl FreqCnnConfig {
    pub fn default_freq(num_classes: usize, seed: u64) -> Cnn2dConfig {
        let mut cfg = Cnn2dConfig::default_2d(num_classes, seed);
        for block in &mut cfg.blocks {
            block.kernel = (1, 3);
            block.padding = (0, 1);
        }
        cfg.pool = (1, 2);
        cfg.time_preserving = true;
        cfg
    }

    pub fn toy_freq(num_classes: usize, input_shape: (usize, usize), seed: u64) -> Cnn2dConfig {
        let mut cfg = Self::default_freq(num_classes, seed);
        for (block, ch) in cfg.blocks.iter_mut().zip([2, 3, 3, 4]) {
            block.out_channels = ch;
        }
        cfg.input_shape = input_shape;
        cfg
    }
}

/// Spatial size in front of the head after all conv/pool stages.
pub fn cnn_head_spatial(cfg: &Cnn2dConfig) -> (usize, usize) {
    let (mut h, mut w) = cfg.input_shape;
    for b in &cfg.blocks {
        h = (h + 2 * b.padding.0 - b.kernel.0) / b.stride.0 + 1;
        w = (w + 2 * b.padding.1 - b.kernel.1) / b.stride.1 + 1;
        h /= cfg.pool.0;
        w /= cfg.pool.1;
    }
    (h, w)
}

struct ConvBlock {
    conv: Conv2d,
    relu: ReLu,
    bn: Option<BatchNorm2d>,
    pool: MaxPool2d,
    dropout: Dropout,
}

impl ConvBlock {
    fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> Array4<f64> {
        let y = self.conv.forward(x, mode);
        let y = self.relu.forward(&y.into_dyn(), mode);
        let y = match &mut self.bn {
            Some(bn) => bn
                .forward(&y.into_dimensionality().expect("4d"), mode)
                .into_dyn(),
            None => y,
        };
        let y = self
            .pool
            .forward(&y.into_dimensionality().expect("4d"), mode);
        self.dropout
            .forward(&y.into_dyn(), mode)
            .into_dimensionality()
            .expect("4d")
    }

    fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let g = self.dropout.backward(&dy.clone().into_dyn());
        let g = self.pool.backward(&g.into_dimensionality().expect("4d"));
        let g = match &mut self.bn {
            Some(bn) => bn.backward(&g).into_dyn(),
            None => g.into_dyn(),
        };
        let g = self.relu.backward(&g);
        self.conv.backward(&g.into_dimensionality().expect("4d"))
    }
}

pub struct Cnn2d {
    pub config: Cnn2dConfig,
    blocks: Vec<ConvBlock>,
    head: super::layers::Linear,
    logsoftmax: LogSoftmax,
    /// (channels, time, freq) entering the head path, cached per batch.
    pre_head_dims: (usize, usize, usize),
    /// Final feature map before aggregation, kept for the equivariance
    /// contract tests.
    pub last_pre_head: Option<Array4<f64>>,
}

impl Cnn2d {
    pub fn new(config: Cnn2dConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut blocks = Vec::with_capacity(4);
        let mut in_c = 1;
        for (i, b) in config.blocks.iter().enumerate() {
            blocks.push(ConvBlock {
                conv: Conv2d::new(
                    &format!("block{i}.conv"),
                    "model",
                    in_c,
                    b.out_channels,
                    b.kernel,
                    b.stride,
                    b.padding,
                    &mut rng,
                ),
                relu: ReLu::new(),
                bn: config
                    .use_batchnorm
                    .then(|| BatchNorm2d::new(&format!("block{i}.bn"), "model", b.out_channels, &mut rng)),
                pool: MaxPool2d::new(config.pool),
                dropout: Dropout::new(config.dropout_p, config.seed.wrapping_add(i as u64)),
            });
            in_c = b.out_channels;
        }
        let (h, w) = cnn_head_spatial(&config);
        let head_in = if config.time_preserving {
            in_c * w
        } else {
            in_c * h * w
        };
        let head = super::layers::Linear::new("head", "model", head_in, config.num_classes, &mut rng);
        Ok(Cnn2d {
            config,
            blocks,
            head,
            logsoftmax: LogSoftmax::new(),
            pre_head_dims: (0, 0, 0),
            last_pre_head: None,
        })
    }

    fn forward_images(&mut self, x: &Array4<f64>, mode: Mode) -> Result<Array2<f64>> {
        let (_, c, h, w) = x.dim();
        if c != 1 || (h, w) != self.config.input_shape {
            return Err(ModelError::ShapeMismatch(format!(
                "expected (N, 1, {}, {}), got (N, {c}, {h}, {w})",
                self.config.input_shape.0, self.config.input_shape.1
            )));
        }
        let mut y = x.clone();
        for block in &mut self.blocks {
            y = block.forward(&y, mode);
        }
        let (_, c, h, w) = y.dim();
        self.pre_head_dims = (c, h, w);
        self.last_pre_head = Some(y.clone());
        let pooled = if self.config.time_preserving {
            time_mean_pool(&y)
        } else {
            flatten(&y)
        };
        let logits = self.head.forward(&pooled, mode);
        Ok(self.logsoftmax.forward(&logits, mode))
    }
}

impl TrainableClassifier for Cnn2d {
    fn forward(&mut self, batch: &BatchInput, mode: Mode) -> Result<ModelOutput> {
        let BatchInput::Images(x) = batch else {
            return Err(ModelError::WrongInputKind {
                expected: "images",
                got: batch.kind(),
            });
        };
        Ok(ModelOutput {
            level_logp: self.forward_images(x, mode)?,
            gender_logp: None,
        })
    }

    fn backward(&mut self, dlevel: &Array2<f64>, _dgender: Option<&Array2<f64>>) {
        let g = self.logsoftmax.backward(dlevel);
        let g = self.head.backward(&g);
        let (c, h, w) = self.pre_head_dims;
        let mut g = if self.config.time_preserving {
            time_mean_pool_backward(&g, c, h, w)
        } else {
            unflatten(&g, c, h, w)
        };
        for block in self.blocks.iter_mut().rev() {
            g = block.backward(&g);
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut params = Vec::new();
        for block in &mut self.blocks {
            params.extend(block.conv.params_mut());
            if let Some(bn) = &mut block.bn {
                params.extend(bn.params_mut());
            }
        }
        params.extend(self.head.params_mut());
        params
    }

    fn reseed_dropout(&mut self, salt: u64) {
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block
                .dropout
                .reseed(crate::util::derive_seed(salt, &format!("cnn-dropout-{i}")));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_spatial_matches_the_shape_arithmetic() {
        // 798x40 through four stride-1 same-pad convs and 2x2 pools:
        // 798 -> 399 -> 199 -> 99 -> 49 and 40 -> 20 -> 10 -> 5 -> 2
        let cfg = Cnn2dConfig::default_2d(3, 0);
        assert_eq!(cnn_head_spatial(&cfg), (49, 2));
        // frequency-axis variant never reduces time
        let cfg = FreqCnnConfig::default_freq(3, 0);
        assert_eq!(cnn_head_spatial(&cfg), (798, 2));
    }

    #[test]
    fn output_rows_are_log_distributions() {
        let cfg = Cnn2dConfig::toy_2d(3, (16, 12), 5);
        let mut model = Cnn2d::new(cfg).unwrap();
        let x = Array4::from_shape_fn((2, 1, 16, 12), |(n, _, i, j)| {
            ((n + 1) as f64 * 0.1) * ((i * 12 + j) as f64 * 0.01).sin()
        });
        let out = model.forward(&BatchInput::Images(x), Mode::Eval).unwrap();
        assert_eq!(out.level_logp.dim(), (2, 3));
        for row in out.level_logp.rows() {
            let sum: f64 = row.iter().map(|v| v.exp()).sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn all_zero_inputs_give_identical_rows_in_eval() {
        let cfg = Cnn2dConfig::toy_2d(3, (16, 12), 5);
        let mut model = Cnn2d::new(cfg).unwrap();
        let x = Array4::<f64>::zeros((3, 1, 16, 12));
        let out = model.forward(&BatchInput::Images(x), Mode::Eval).unwrap();
        let first = out.level_logp.row(0).to_owned();
        for row in out.level_logp.rows() {
            for (a, b) in row.iter().zip(first.iter()) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn freq_variant_preserves_time_and_is_time_equivariant() {
        let cfg = FreqCnnConfig::toy_freq(3, (10, 12), 9);
        let mut model = Cnn2d::new(cfg).unwrap();
        let x = Array4::from_shape_fn((1, 1, 10, 12), |(_, _, i, j)| {
            (i as f64 * 0.37).sin() + (j as f64 * 0.11).cos()
        });
        let _ = model
            .forward(&BatchInput::Images(x.clone()), Mode::Eval)
            .unwrap();
        let pre = model.last_pre_head.take().unwrap();
        assert_eq!(pre.dim().2, 10, "time dimension must be preserved");

        // reverse the time frames of the input
        let mut x_rev = x.clone();
        for i in 0..10 {
            for j in 0..12 {
                x_rev[[0, 0, i, j]] = x[[0, 0, 9 - i, j]];
            }
        }
        let _ = model
            .forward(&BatchInput::Images(x_rev), Mode::Eval)
            .unwrap();
        let pre_rev = model.last_pre_head.take().unwrap();
        let (_, c, t, f) = pre.dim();
        for ci in 0..c {
            for ti in 0..t {
                for fi in 0..f {
                    let a = pre[[0, ci, ti, fi]];
                    let b = pre_rev[[0, ci, t - 1 - ti, fi]];
                    assert!((a - b).abs() < 1e-12, "not equivariant at {ci},{ti},{fi}");
                }
            }
        }
    }

    #[test]
    fn wrong_geometry_is_rejected() {
        let cfg = Cnn2dConfig::toy_2d(3, (16, 12), 5);
        let mut model = Cnn2d::new(cfg).unwrap();
        let x = Array4::<f64>::zeros((1, 1, 8, 12));
        assert!(matches!(
            model.forward(&BatchInput::Images(x), Mode::Eval),
            Err(ModelError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn five_blocks_are_rejected() {
        let mut cfg = Cnn2dConfig::default_2d(3, 0);
        cfg.blocks.push(cfg.blocks[0].clone());
        assert!(matches!(Cnn2d::new(cfg), Err(ModelError::InvalidConfig(_))));
    }
}

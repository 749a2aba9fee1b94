//! Residual network over spectrogram inputs: five blocks with channels
//! (128, 128, 256, 256, 512), 3x3 stride-2 downsampling convs, and a
//! 1x1 stride-2 projection shortcut from the block input to the last
//! conv's output. Global average pooling feeds the classification head.

use ndarray::{Array2, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{global_avg_pool, global_avg_pool_backward, Conv2d, Linear, LogSoftmax, ReLu};
use super::{BatchInput, Mode, ModelError, ModelOutput, Param, Result, TrainableClassifier};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResNetConfig {
    /// Exactly five output-channel counts.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub num_classes: usize,
    pub input_shape: (usize, usize),
    pub seed: u64,
}

impl ResNetConfig {
    pub fn default_resnet(num_classes: usize, seed: u64) -> Self {
        ResNetConfig {
            channels: vec![128, 128, 256, 256, 512],
            kernel: 3,
            stride: 2,
            num_classes,
            input_shape: (798, 40),
            seed,
        }
    }

    pub fn toy(num_classes: usize, input_shape: (usize, usize), seed: u64) -> Self {
        ResNetConfig {
            channels: vec![2, 2, 3, 3, 4],
            kernel: 3,
            stride: 2,
            num_classes,
            input_shape,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.channels.len() != 5 {
            return Err(ModelError::InvalidConfig(format!(
                "the architecture uses exactly 5 residual blocks, got {}",
                self.channels.len()
            )));
        }
        Ok(())
    }
}

/// One residual block: branch = conv2(relu(conv1(x))) with conv1
/// downsampling; output = branch + projection(x).
pub struct ResBlock {
    pub conv1: Conv2d,
    relu: ReLu,
    pub conv2: Conv2d,
    pub projection: Conv2d,
    x_needed: bool,
}

impl ResBlock {
    fn new(name: &str, in_c: usize, out_c: usize, kernel: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let pad = kernel / 2;
        ResBlock {
            conv1: Conv2d::new(
                &format!("{name}.conv1"),
                "model",
                in_c,
                out_c,
                (kernel, kernel),
                (stride, stride),
                (pad, pad),
                rng,
            ),
            relu: ReLu::new(),
            conv2: Conv2d::new(
                &format!("{name}.conv2"),
                "model",
                out_c,
                out_c,
                (kernel, kernel),
                (1, 1),
                (pad, pad),
                rng,
            ),
            projection: Conv2d::new(
                &format!("{name}.proj"),
                "model",
                in_c,
                out_c,
                (1, 1),
                (stride, stride),
                (0, 0),
                rng,
            ),
            x_needed: false,
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> Array4<f64> {
        let branch = self.conv1.forward(x, mode);
        let branch = self.relu.forward(&branch.into_dyn(), mode);
        let branch = self
            .conv2
            .forward(&branch.into_dimensionality().expect("4d"), mode);
        let shortcut = self.projection.forward(x, mode);
        self.x_needed = mode == Mode::Train;
        branch + shortcut
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let g = self.conv2.backward(dy);
        let g = self.relu.backward(&g.into_dyn());
        let dx_branch = self.conv1.backward(&g.into_dimensionality().expect("4d"));
        let dx_shortcut = self.projection.backward(dy);
        dx_branch + dx_shortcut
    }

    /// Zeroes the branch convolutions so the block reduces to its
    /// projection shortcut exactly.
    pub fn zero_branch(&mut self) {
        self.conv1.w.value.fill(0.0);
        self.conv1.b.value.fill(0.0);
        self.conv2.w.value.fill(0.0);
        self.conv2.b.value.fill(0.0);
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.conv1.params_mut();
        p.extend(self.conv2.params_mut());
        p.extend(self.projection.params_mut());
        p
    }
}

/// (h, w) after each of the five stride-2 stages.
pub fn resnet_shape_chain(input: (usize, usize), cfg: &ResNetConfig) -> Vec<(usize, usize)> {
    let pad = cfg.kernel / 2;
    let mut chain = vec![input];
    let (mut h, mut w) = input;
    for _ in 0..cfg.channels.len() {
        h = (h + 2 * pad - cfg.kernel) / cfg.stride + 1;
        w = (w + 2 * pad - cfg.kernel) / cfg.stride + 1;
        chain.push((h, w));
    }
    chain
}

pub struct ResNet {
    pub config: ResNetConfig,
    pub blocks: Vec<ResBlock>,
    head: Linear,
    logsoftmax: LogSoftmax,
    gap_dims: (usize, usize),
}

impl ResNet {
    pub fn new(config: ResNetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut blocks = Vec::with_capacity(5);
        let mut in_c = 1;
        for (i, &out_c) in config.channels.iter().enumerate() {
            blocks.push(ResBlock::new(
                &format!("block{i}"),
                in_c,
                out_c,
                config.kernel,
                config.stride,
                &mut rng,
            ));
            in_c = out_c;
        }
        let head = Linear::new("head", "model", in_c, config.num_classes, &mut rng);
        Ok(ResNet {
            config,
            blocks,
            head,
            logsoftmax: LogSoftmax::new(),
            gap_dims: (0, 0),
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
        let (_, _, gh, gw) = y.dim();
        self.gap_dims = (gh, gw);
        let pooled = global_avg_pool(&y);
        let logits = self.head.forward(&pooled, mode);
        Ok(self.logsoftmax.forward(&logits, mode))
    }
}

impl TrainableClassifier for ResNet {
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
        let mut g = global_avg_pool_backward(&g, self.gap_dims.0, self.gap_dims.1);
        for block in self.blocks.iter_mut().rev() {
            g = block.backward(&g);
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut params = Vec::new();
        for block in &mut self.blocks {
            params.extend(block.params_mut());
        }
        params.extend(self.head.params_mut());
        params
    }

    fn reseed_dropout(&mut self, _salt: u64) {}
}

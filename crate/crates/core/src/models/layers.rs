//! Primitive layers. Each owns its parameters and the forward caches its
//! backward pass needs; backward accumulates into parameter grads and
//! returns the input gradient.

use ndarray::{Array1, Array2, Array4, ArrayD, Axis, Ix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::param::{Param, ParamInit};
use super::Mode;

pub struct Conv2d {
    pub w: Param, // (out_c, in_c, kh, kw)
    pub b: Param, // (out_c)
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    x_cache: Option<Array4<f64>>,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        group: &str,
        in_c: usize,
        out_c: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_c * kernel.0 * kernel.1;
        Conv2d {
            w: Param::new(
                format!("{name}.weight"),
                group,
                &[out_c, in_c, kernel.0, kernel.1],
                ParamInit::KaimingUniform { fan_in },
                rng,
            ),
            b: Param::new(format!("{name}.bias"), group, &[out_c], ParamInit::Zeros, rng),
            stride,
            padding,
            x_cache: None,
        }
    }

    pub fn out_shape(&self, h: usize, w: usize) -> (usize, usize) {
        let kh = self.w.value.shape()[2];
        let kw = self.w.value.shape()[3];
        (
            (h + 2 * self.padding.0 - kh) / self.stride.0 + 1,
            (w + 2 * self.padding.1 - kw) / self.stride.1 + 1,
        )
    }

    pub fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> Array4<f64> {
        let (n, in_c, h, w) = x.dim();
        let wv = self.w.value.view().into_dimensionality::<Ix4>().expect("4d weight");
        let (out_c, w_in_c, kh, kw) = wv.dim();
        assert_eq!(in_c, w_in_c, "conv input channels");
        let (oh, ow) = self.out_shape(h, w);
        let (sh, sw) = self.stride;
        let (ph, pw) = self.padding;

        let mut y = Array4::<f64>::zeros((n, out_c, oh, ow));
        for ni in 0..n {
            for co in 0..out_c {
                let bias = self.b.value[[co]];
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = bias;
                        for ci in 0..in_c {
                            for a in 0..kh {
                                let ih = (i * sh + a) as isize - ph as isize;
                                if ih < 0 || ih >= h as isize {
                                    continue;
                                }
                                for bk in 0..kw {
                                    let iw = (j * sw + bk) as isize - pw as isize;
                                    if iw < 0 || iw >= w as isize {
                                        continue;
                                    }
                                    acc += x[[ni, ci, ih as usize, iw as usize]]
                                        * wv[[co, ci, a, bk]];
                                }
                            }
                        }
                        y[[ni, co, i, j]] = acc;
                    }
                }
            }
        }
        if mode == Mode::Train {
            self.x_cache = Some(x.clone());
        }
        y
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let x = self.x_cache.take().expect("conv backward without forward");
        let (n, in_c, h, w) = x.dim();
        let wv = self.w.value.view().into_dimensionality::<Ix4>().expect("4d weight");
        let (out_c, _, kh, kw) = wv.dim();
        let (_, _, oh, ow) = dy.dim();
        let (sh, sw) = self.stride;
        let (ph, pw) = self.padding;

        let mut dx = Array4::<f64>::zeros((n, in_c, h, w));
        let mut dw = Array4::<f64>::zeros((out_c, in_c, kh, kw));
        let mut db = Array1::<f64>::zeros(out_c);
        for ni in 0..n {
            for co in 0..out_c {
                for i in 0..oh {
                    for j in 0..ow {
                        let g = dy[[ni, co, i, j]];
                        if g == 0.0 {
                            continue;
                        }
                        db[co] += g;
                        for ci in 0..in_c {
                            for a in 0..kh {
                                let ih = (i * sh + a) as isize - ph as isize;
                                if ih < 0 || ih >= h as isize {
                                    continue;
                                }
                                for bk in 0..kw {
                                    let iw = (j * sw + bk) as isize - pw as isize;
                                    if iw < 0 || iw >= w as isize {
                                        continue;
                                    }
                                    dw[[co, ci, a, bk]] += g * x[[ni, ci, ih as usize, iw as usize]];
                                    dx[[ni, ci, ih as usize, iw as usize]] += g * wv[[co, ci, a, bk]];
                                }
                            }
                        }
                    }
                }
            }
        }
        self.w.grad += &dw.into_dyn();
        self.b.grad += &db.into_dyn();
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}

pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<Bn2dCache>,
}

struct Bn2dCache {
    x_hat: Array4<f64>,
    inv_std: Vec<f64>,
}

impl BatchNorm2d {
    pub fn new(name: &str, group: &str, channels: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut gamma = Param::new(format!("{name}.gamma"), group, &[channels], ParamInit::Zeros, rng);
        gamma.value.fill(1.0);
        BatchNorm2d {
            gamma,
            beta: Param::new(format!("{name}.beta"), group, &[channels], ParamInit::Zeros, rng),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let m = (n * h * w) as f64;
        let mut y = Array4::<f64>::zeros((n, c, h, w));
        match mode {
            Mode::Train => {
                let mut x_hat = Array4::<f64>::zeros((n, c, h, w));
                let mut inv_std = vec![0.0; c];
                for ci in 0..c {
                    let mut mean = 0.0;
                    for ni in 0..n {
                        for i in 0..h {
                            for j in 0..w {
                                mean += x[[ni, ci, i, j]];
                            }
                        }
                    }
                    mean /= m;
                    let mut var = 0.0;
                    for ni in 0..n {
                        for i in 0..h {
                            for j in 0..w {
                                let d = x[[ni, ci, i, j]] - mean;
                                var += d * d;
                            }
                        }
                    }
                    var /= m;
                    let istd = 1.0 / (var + self.eps).sqrt();
                    inv_std[ci] = istd;
                    let g = self.gamma.value[[ci]];
                    let b = self.beta.value[[ci]];
                    for ni in 0..n {
                        for i in 0..h {
                            for j in 0..w {
                                let xh = (x[[ni, ci, i, j]] - mean) * istd;
                                x_hat[[ni, ci, i, j]] = xh;
                                y[[ni, ci, i, j]] = g * xh + b;
                            }
                        }
                    }
                    self.running_mean[ci] =
                        (1.0 - self.momentum) * self.running_mean[ci] + self.momentum * mean;
                    self.running_var[ci] =
                        (1.0 - self.momentum) * self.running_var[ci] + self.momentum * var;
                }
                self.cache = Some(Bn2dCache { x_hat, inv_std });
            }
            Mode::Eval => {
                for ci in 0..c {
                    let istd = 1.0 / (self.running_var[ci] + self.eps).sqrt();
                    let g = self.gamma.value[[ci]];
                    let b = self.beta.value[[ci]];
                    let mean = self.running_mean[ci];
                    for ni in 0..n {
                        for i in 0..h {
                            for j in 0..w {
                                y[[ni, ci, i, j]] = g * (x[[ni, ci, i, j]] - mean) * istd + b;
                            }
                        }
                    }
                }
            }
        }
        y
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let cache = self.cache.take().expect("bn backward without train forward");
        let (n, c, h, w) = dy.dim();
        let m = (n * h * w) as f64;
        let mut dx = Array4::<f64>::zeros((n, c, h, w));
        for ci in 0..c {
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for ni in 0..n {
                for i in 0..h {
                    for j in 0..w {
                        let g = dy[[ni, ci, i, j]];
                        sum_dy += g;
                        sum_dy_xhat += g * cache.x_hat[[ni, ci, i, j]];
                    }
                }
            }
            self.gamma.grad[[ci]] += sum_dy_xhat;
            self.beta.grad[[ci]] += sum_dy;
            let scale = self.gamma.value[[ci]] * cache.inv_std[ci];
            for ni in 0..n {
                for i in 0..h {
                    for j in 0..w {
                        let g = dy[[ni, ci, i, j]];
                        let xh = cache.x_hat[[ni, ci, i, j]];
                        dx[[ni, ci, i, j]] =
                            scale * (g - sum_dy / m - xh * sum_dy_xhat / m);
                    }
                }
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

pub struct BatchNorm1d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<(Array2<f64>, Vec<f64>)>, // (x_hat, inv_std)
}

impl BatchNorm1d {
    pub fn new(name: &str, group: &str, features: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut gamma = Param::new(format!("{name}.gamma"), group, &[features], ParamInit::Zeros, rng);
        gamma.value.fill(1.0);
        BatchNorm1d {
            gamma,
            beta: Param::new(format!("{name}.beta"), group, &[features], ParamInit::Zeros, rng),
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>, mode: Mode) -> Array2<f64> {
        let (n, d) = x.dim();
        let mut y = Array2::<f64>::zeros((n, d));
        match mode {
            Mode::Train => {
                let m = n as f64;
                let mut x_hat = Array2::<f64>::zeros((n, d));
                let mut inv_std = vec![0.0; d];
                for j in 0..d {
                    let col = x.column(j);
                    let mean = col.sum() / m;
                    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
                    let istd = 1.0 / (var + self.eps).sqrt();
                    inv_std[j] = istd;
                    for i in 0..n {
                        let xh = (x[[i, j]] - mean) * istd;
                        x_hat[[i, j]] = xh;
                        y[[i, j]] = self.gamma.value[[j]] * xh + self.beta.value[[j]];
                    }
                    self.running_mean[j] =
                        (1.0 - self.momentum) * self.running_mean[j] + self.momentum * mean;
                    self.running_var[j] =
                        (1.0 - self.momentum) * self.running_var[j] + self.momentum * var;
                }
                self.cache = Some((x_hat, inv_std));
            }
            Mode::Eval => {
                for j in 0..d {
                    let istd = 1.0 / (self.running_var[j] + self.eps).sqrt();
                    for i in 0..n {
                        y[[i, j]] = self.gamma.value[[j]] * (x[[i, j]] - self.running_mean[j]) * istd
                            + self.beta.value[[j]];
                    }
                }
            }
        }
        y
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let (x_hat, inv_std) = self.cache.take().expect("bn1d backward without train forward");
        let (n, d) = dy.dim();
        let m = n as f64;
        let mut dx = Array2::<f64>::zeros((n, d));
        for j in 0..d {
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for i in 0..n {
                sum_dy += dy[[i, j]];
                sum_dy_xhat += dy[[i, j]] * x_hat[[i, j]];
            }
            self.gamma.grad[[j]] += sum_dy_xhat;
            self.beta.grad[[j]] += sum_dy;
            let scale = self.gamma.value[[j]] * inv_std[j];
            for i in 0..n {
                dx[[i, j]] =
                    scale * (dy[[i, j]] - sum_dy / m - x_hat[[i, j]] * sum_dy_xhat / m);
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

/// ReLU with a cached activation mask.
#[derive(Default)]
pub struct ReLu {
    mask: Option<ArrayD<bool>>,
}

impl ReLu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &ArrayD<f64>, mode: Mode) -> ArrayD<f64> {
        let y = x.mapv(|v| v.max(0.0));
        if mode == Mode::Train {
            self.mask = Some(x.mapv(|v| v > 0.0));
        }
        y
    }

    pub fn backward(&mut self, dy: &ArrayD<f64>) -> ArrayD<f64> {
        let mask = self.mask.take().expect("relu backward without forward");
        let mut dx = dy.clone();
        dx.zip_mut_with(&mask, |g, &m| {
            if !m {
                *g = 0.0;
            }
        });
        dx
    }
}

pub struct LeakyReLu {
    pub negative_slope: f64,
    mask: Option<ArrayD<bool>>,
}

impl LeakyReLu {
    pub fn new(negative_slope: f64) -> Self {
        LeakyReLu {
            negative_slope,
            mask: None,
        }
    }

    pub fn forward(&mut self, x: &ArrayD<f64>, mode: Mode) -> ArrayD<f64> {
        let s = self.negative_slope;
        let y = x.mapv(|v| if v > 0.0 { v } else { s * v });
        if mode == Mode::Train {
            self.mask = Some(x.mapv(|v| v > 0.0));
        }
        y
    }

    pub fn backward(&mut self, dy: &ArrayD<f64>) -> ArrayD<f64> {
        let mask = self.mask.take().expect("leaky relu backward without forward");
        let s = self.negative_slope;
        let mut dx = dy.clone();
        dx.zip_mut_with(&mask, |g, &m| {
            if !m {
                *g *= s;
            }
        });
        dx
    }
}

/// Non-overlapping max pooling; ties go to the first element scanned.
pub struct MaxPool2d {
    pub kernel: (usize, usize),
    argmax: Option<(Vec<usize>, (usize, usize, usize, usize))>,
}

impl MaxPool2d {
    pub fn new(kernel: (usize, usize)) -> Self {
        MaxPool2d {
            kernel,
            argmax: None,
        }
    }

    pub fn out_shape(&self, h: usize, w: usize) -> (usize, usize) {
        (h / self.kernel.0, w / self.kernel.1)
    }

    pub fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let (kh, kw) = self.kernel;
        let (oh, ow) = self.out_shape(h, w);
        let mut y = Array4::<f64>::zeros((n, c, oh, ow));
        let mut argmax = vec![0usize; n * c * oh * ow];
        let mut flat = 0usize;
        for ni in 0..n {
            for ci in 0..c {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0usize;
                        for a in 0..kh {
                            for b in 0..kw {
                                let ih = i * kh + a;
                                let iw = j * kw + b;
                                let v = x[[ni, ci, ih, iw]];
                                if v > best {
                                    best = v;
                                    best_idx = ih * w + iw;
                                }
                            }
                        }
                        y[[ni, ci, i, j]] = best;
                        argmax[flat] = best_idx;
                        flat += 1;
                    }
                }
            }
        }
        if mode == Mode::Train {
            self.argmax = Some((argmax, (n, c, h, w)));
        }
        y
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let (argmax, (n, c, h, w)) = self.argmax.take().expect("pool backward without forward");
        let (_, _, oh, ow) = dy.dim();
        let mut dx = Array4::<f64>::zeros((n, c, h, w));
        let mut flat = 0usize;
        for ni in 0..n {
            for ci in 0..c {
                for i in 0..oh {
                    for j in 0..ow {
                        let idx = argmax[flat];
                        dx[[ni, ci, idx / w, idx % w]] += dy[[ni, ci, i, j]];
                        flat += 1;
                    }
                }
            }
        }
        dx
    }
}

/// Inverted dropout with its own seeded stream.
pub struct Dropout {
    pub p: f64,
    rng: ChaCha8Rng,
    mask: Option<ArrayD<f64>>,
}

impl Dropout {
    pub fn new(p: f64, seed: u64) -> Self {
        Dropout {
            p,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: None,
        }
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn forward(&mut self, x: &ArrayD<f64>, mode: Mode) -> ArrayD<f64> {
        if mode == Mode::Eval || self.p <= 0.0 {
            self.mask = None;
            return x.clone();
        }
        let keep = 1.0 - self.p;
        let mask = ArrayD::from_shape_simple_fn(x.raw_dim(), || {
            if self.rng.random_range(0.0..1.0) < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        let y = x * &mask;
        self.mask = Some(mask);
        y
    }

    pub fn backward(&mut self, dy: &ArrayD<f64>) -> ArrayD<f64> {
        match self.mask.take() {
            Some(mask) => dy * &mask,
            None => dy.clone(),
        }
    }
}

pub struct Linear {
    pub w: Param, // (out, in)
    pub b: Param, // (out)
    x_cache: Option<Array2<f64>>,
}

impl Linear {
    pub fn new(name: &str, group: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            w: Param::new(
                format!("{name}.weight"),
                group,
                &[out_dim, in_dim],
                ParamInit::KaimingUniform { fan_in: in_dim },
                rng,
            ),
            b: Param::new(format!("{name}.bias"), group, &[out_dim], ParamInit::Zeros, rng),
            x_cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>, mode: Mode) -> Array2<f64> {
        let w = self.w.value.view().into_dimensionality::<ndarray::Ix2>().expect("2d weight");
        let b = self.b.value.view().into_dimensionality::<ndarray::Ix1>().expect("1d bias");
        let mut y = x.dot(&w.t());
        y += &b;
        if mode == Mode::Train {
            self.x_cache = Some(x.clone());
        }
        y
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let x = self.x_cache.take().expect("linear backward without forward");
        let w = self.w.value.view().into_dimensionality::<ndarray::Ix2>().expect("2d weight");
        let dx = dy.dot(&w);
        let dw = dy.t().dot(&x);
        let db = dy.sum_axis(Axis(0));
        self.w.grad += &dw.into_dyn();
        self.b.grad += &db.into_dyn();
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Row-wise log-softmax.
#[derive(Default)]
pub struct LogSoftmax {
    y_cache: Option<Array2<f64>>,
}

impl LogSoftmax {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Array2<f64>, mode: Mode) -> Array2<f64> {
        let mut y = x.clone();
        for mut row in y.rows_mut() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            row.mapv_inplace(|v| v - log_sum);
        }
        if mode == Mode::Train {
            self.y_cache = Some(y.clone());
        }
        y
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let y = self.y_cache.take().expect("logsoftmax backward without forward");
        let mut dx = dy.clone();
        for (mut drow, yrow) in dx.rows_mut().into_iter().zip(y.rows()) {
            let sum: f64 = drow.sum();
            for (d, &yv) in drow.iter_mut().zip(yrow.iter()) {
                *d -= yv.exp() * sum;
            }
        }
        dx
    }
}

/// Mean over the spatial dims: (N, C, H, W) -> (N, C).
pub fn global_avg_pool(x: &Array4<f64>) -> Array2<f64> {
    let (n, c, h, w) = x.dim();
    let m = (h * w) as f64;
    let mut y = Array2::<f64>::zeros((n, c));
    for ni in 0..n {
        for ci in 0..c {
            let mut acc = 0.0;
            for i in 0..h {
                for j in 0..w {
                    acc += x[[ni, ci, i, j]];
                }
            }
            y[[ni, ci]] = acc / m;
        }
    }
    y
}

pub fn global_avg_pool_backward(dy: &Array2<f64>, h: usize, w: usize) -> Array4<f64> {
    let (n, c) = dy.dim();
    let m = (h * w) as f64;
    let mut dx = Array4::<f64>::zeros((n, c, h, w));
    for ni in 0..n {
        for ci in 0..c {
            let g = dy[[ni, ci]] / m;
            for i in 0..h {
                for j in 0..w {
                    dx[[ni, ci, i, j]] = g;
                }
            }
        }
    }
    dx
}

/// Mean over the time axis: (N, C, T, F) -> (N, C, F) flattened to (N, C*F).
pub fn time_mean_pool(x: &Array4<f64>) -> Array2<f64> {
    let (n, c, t, f) = x.dim();
    let mut y = Array2::<f64>::zeros((n, c * f));
    for ni in 0..n {
        for ci in 0..c {
            for fi in 0..f {
                let mut acc = 0.0;
                for ti in 0..t {
                    acc += x[[ni, ci, ti, fi]];
                }
                y[[ni, ci * f + fi]] = acc / t as f64;
            }
        }
    }
    y
}

pub fn time_mean_pool_backward(dy: &Array2<f64>, c: usize, t: usize, f: usize) -> Array4<f64> {
    let n = dy.nrows();
    let mut dx = Array4::<f64>::zeros((n, c, t, f));
    for ni in 0..n {
        for ci in 0..c {
            for fi in 0..f {
                let g = dy[[ni, ci * f + fi]] / t as f64;
                for ti in 0..t {
                    dx[[ni, ci, ti, fi]] = g;
                }
            }
        }
    }
    dx
}

/// (N, C, H, W) -> (N, C*H*W), row-major.
pub fn flatten(x: &Array4<f64>) -> Array2<f64> {
    let (n, c, h, w) = x.dim();
    let mut y = Array2::<f64>::zeros((n, c * h * w));
    for ni in 0..n {
        let mut k = 0usize;
        for ci in 0..c {
            for i in 0..h {
                for j in 0..w {
                    y[[ni, k]] = x[[ni, ci, i, j]];
                    k += 1;
                }
            }
        }
    }
    y
}

pub fn unflatten(dy: &Array2<f64>, c: usize, h: usize, w: usize) -> Array4<f64> {
    let n = dy.nrows();
    let mut dx = Array4::<f64>::zeros((n, c, h, w));
    for ni in 0..n {
        let mut k = 0usize;
        for ci in 0..c {
            for i in 0..h {
                for j in 0..w {
                    dx[[ni, ci, i, j]] = dy[[ni, k]];
                    k += 1;
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, IxDyn};

    #[test]
    fn logsoftmax_rows_exponentiate_to_one() {
        let mut lsm = LogSoftmax::new();
        let x = array![[1.0, 2.0, 3.0], [-5.0, 0.0, 5.0]];
        let y = lsm.forward(&x, Mode::Eval);
        for row in y.rows() {
            let sum: f64 = row.iter().map(|v| v.exp()).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn maxpool_ties_are_deterministic_and_backward_routes_to_argmax() {
        let mut pool = MaxPool2d::new((2, 2));
        let x = Array4::from_shape_vec((1, 1, 2, 2), vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let y = pool.forward(&x, Mode::Train);
        assert_eq!(y[[0, 0, 0, 0]], 1.0);
        let dy = Array4::from_shape_vec((1, 1, 1, 1), vec![2.0]).unwrap();
        let dx = pool.backward(&dy);
        // tie goes to the first scanned element
        assert_eq!(dx[[0, 0, 0, 0]], 2.0);
        assert_eq!(dx[[0, 0, 1, 1]], 0.0);
    }

    #[test]
    fn conv_identity_kernel_passes_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut conv = Conv2d::new("c", "m", 1, 1, (1, 1), (1, 1), (0, 0), &mut rng);
        conv.w.value.fill(1.0);
        conv.b.value.fill(0.0);
        let x = Array4::from_shape_vec((1, 1, 2, 3), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = conv.forward(&x, Mode::Eval);
        assert_eq!(y, x);
    }

    #[test]
    fn dropout_eval_is_identity_and_train_scales() {
        let mut d = Dropout::new(0.5, 7);
        let x = ArrayD::from_shape_vec(IxDyn(&[100]), vec![1.0; 100]).unwrap();
        assert_eq!(d.forward(&x, Mode::Eval), x);
        let y = d.forward(&x, Mode::Train);
        for &v in y.iter() {
            assert!(v == 0.0 || (v - 2.0).abs() < 1e-12);
        }
    }
}

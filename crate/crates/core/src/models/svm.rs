//! Support-vector classification over fixed embeddings. Two trainers:
//! a kernel mode solving the soft-margin dual with SMO (RBF kernel,
//! one-vs-rest for multiclass) and a linear mode running hinge-loss SGD
//! with L2 regularization.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvmKernel {
    Rbf,
    Linear,
}

/// Which trainer a config names; the two are distinct modes, not one
/// algorithm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvmMode {
    /// SMO on the soft-margin dual.
    Kernel,
    /// Hinge-loss SGD on a linear model.
    LinearSgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub mode: SvmMode,
    pub kernel: SvmKernel,
    pub c: f64,
    pub gamma: f64,
    /// L2 coefficient for the linear SGD mode.
    pub l2: f64,
    pub sgd_epochs: usize,
    pub sgd_lr: f64,
    pub max_passes: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            mode: SvmMode::Kernel,
            kernel: SvmKernel::Rbf,
            c: 10.0,
            gamma: 0.01,
            l2: 1e-3,
            sgd_epochs: 50,
            sgd_lr: 0.1,
            max_passes: 200,
            tol: 1e-3,
            seed: 0,
        }
    }
}

enum Trained {
    Kernel {
        support: Array2<f64>,
        /// alpha_i * y_i per class, (classes, n_support)
        coeffs: Array2<f64>,
        biases: Vec<f64>,
    },
    Linear {
        weights: Array2<f64>, // (classes, dim)
        biases: Vec<f64>,
    },
}

pub struct SvmModel {
    pub config: SvmConfig,
    pub classes: Vec<usize>,
    trained: Trained,
}

fn kernel_value(cfg: &SvmConfig, a: &[f64], b: &[f64]) -> f64 {
    match cfg.kernel {
        SvmKernel::Rbf => {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            (-cfg.gamma * d2).exp()
        }
        SvmKernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
    }
}

/// Fits a (possibly multiclass) SVM; one binary machine per class in
/// one-vs-rest arrangement.
pub fn svm_fit(x: &Array2<f64>, y: &[usize], config: &SvmConfig) -> Result<SvmModel> {
    if x.nrows() != y.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "{} rows vs {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("svm training embeddings".to_string()));
    }
    let mut classes: Vec<usize> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(ModelError::SingleClass);
    }

    let trained = match config.mode {
        SvmMode::Kernel => {
            let n = x.nrows();
            let mut gram = Array2::zeros((n, n));
            for i in 0..n {
                for j in i..n {
                    let k = kernel_value(
                        config,
                        x.row(i).as_slice().expect("contiguous"),
                        x.row(j).as_slice().expect("contiguous"),
                    );
                    gram[[i, j]] = k;
                    gram[[j, i]] = k;
                }
            }
            let mut coeffs = Array2::zeros((classes.len(), n));
            let mut biases = Vec::with_capacity(classes.len());
            for (ci, &class) in classes.iter().enumerate() {
                let labels: Vec<f64> = y
                    .iter()
                    .map(|&l| if l == class { 1.0 } else { -1.0 })
                    .collect();
                let (alphas, b) = smo_binary(&gram, &labels, config, ci as u64);
                for i in 0..n {
                    coeffs[[ci, i]] = alphas[i] * labels[i];
                }
                biases.push(b);
            }
            Trained::Kernel {
                support: x.clone(),
                coeffs,
                biases,
            }
        }
        SvmMode::LinearSgd => {
            let dim = x.ncols();
            let mut weights = Array2::zeros((classes.len(), dim));
            let mut biases = vec![0.0; classes.len()];
            for (ci, &class) in classes.iter().enumerate() {
                let labels: Vec<f64> = y
                    .iter()
                    .map(|&l| if l == class { 1.0 } else { -1.0 })
                    .collect();
                let (w, b) = hinge_sgd_binary(x, &labels, config, ci as u64);
                weights.row_mut(ci).assign(&w);
                biases[ci] = b;
            }
            Trained::Linear { weights, biases }
        }
    };

    Ok(SvmModel {
        config: config.clone(),
        classes,
        trained,
    })
}

/// Simplified sequential minimal optimization on the soft-margin dual.
fn smo_binary(gram: &Array2<f64>, y: &[f64], cfg: &SvmConfig, salt: u64) -> (Vec<f64>, f64) {
    let n = y.len();
    let c = cfg.c;
    let tol = cfg.tol;
    let mut alphas = vec![0.0f64; n];
    let mut b = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(crate::util::derive_seed(cfg.seed, &format!("smo:{salt}")));

    let decision = |alphas: &[f64], b: f64, i: usize| -> f64 {
        let mut f = b;
        for j in 0..n {
            if alphas[j] != 0.0 {
                f += alphas[j] * y[j] * gram[[j, i]];
            }
        }
        f
    };

    let mut quiet = 0usize;
    for _sweep in 0..cfg.max_passes {
        let mut changed = 0usize;
        for i in 0..n {
            let e_i = decision(&alphas, b, i) - y[i];
            let violates = (y[i] * e_i < -tol && alphas[i] < c) || (y[i] * e_i > tol && alphas[i] > 0.0);
            if !violates {
                continue;
            }
            // second index: random distinct choice
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let e_j = decision(&alphas, b, j) - y[j];

            let (lo, hi) = if y[i] != y[j] {
                ((alphas[j] - alphas[i]).max(0.0), (c + alphas[j] - alphas[i]).min(c))
            } else {
                ((alphas[i] + alphas[j] - c).max(0.0), (alphas[i] + alphas[j]).min(c))
            };
            if (hi - lo).abs() < 1e-12 {
                continue;
            }
            let eta = 2.0 * gram[[i, j]] - gram[[i, i]] - gram[[j, j]];
            if eta >= 0.0 {
                continue;
            }
            let alpha_j_old = alphas[j];
            let alpha_i_old = alphas[i];
            let mut alpha_j = alpha_j_old - y[j] * (e_i - e_j) / eta;
            alpha_j = alpha_j.clamp(lo, hi);
            if (alpha_j - alpha_j_old).abs() < 1e-7 {
                continue;
            }
            let alpha_i = alpha_i_old + y[i] * y[j] * (alpha_j_old - alpha_j);
            alphas[i] = alpha_i;
            alphas[j] = alpha_j;

            let b1 = b - e_i
                - y[i] * (alpha_i - alpha_i_old) * gram[[i, i]]
                - y[j] * (alpha_j - alpha_j_old) * gram[[i, j]];
            let b2 = b - e_j
                - y[i] * (alpha_i - alpha_i_old) * gram[[i, j]]
                - y[j] * (alpha_j - alpha_j_old) * gram[[j, j]];
            b = if alpha_i > 0.0 && alpha_i < c {
                b1
            } else if alpha_j > 0.0 && alpha_j < c {
                b2
            } else {
                (b1 + b2) / 2.0
            };
            changed += 1;
        }
        // three consecutive quiet sweeps mean the KKT conditions hold
        // within tol (the random second index makes one sweep noisy)
        if changed == 0 {
            quiet += 1;
            if quiet >= 3 {
                break;
            }
        } else {
            quiet = 0;
        }
    }

    // Recompute the bias from the KKT conditions; the incremental
    // estimate drifts when every support vector sits at a bound, which
    // matters for near-degenerate margins.
    let margins: Vec<f64> = (0..n)
        .map(|i| {
            let mut g = 0.0;
            for j in 0..n {
                if alphas[j] != 0.0 {
                    g += alphas[j] * y[j] * gram[[j, i]];
                }
            }
            g
        })
        .collect();
    let free: Vec<usize> = (0..n)
        .filter(|&i| alphas[i] > 1e-8 && alphas[i] < c - 1e-8)
        .collect();
    b = if !free.is_empty() {
        free.iter().map(|&i| y[i] - margins[i]).sum::<f64>() / free.len() as f64
    } else {
        let mut lower = f64::NEG_INFINITY;
        let mut upper = f64::INFINITY;
        for i in 0..n {
            let at_bound = alphas[i] >= c - 1e-8;
            let bound = if y[i] > 0.0 { 1.0 - margins[i] } else { -1.0 - margins[i] };
            // alpha=0 demands y*f >= 1; alpha=C demands y*f <= 1
            match (y[i] > 0.0, at_bound) {
                (true, false) => lower = lower.max(bound),
                (true, true) => upper = upper.min(bound),
                (false, false) => upper = upper.min(bound),
                (false, true) => lower = lower.max(bound),
            }
        }
        match (lower.is_finite(), upper.is_finite()) {
            (true, true) => (lower + upper) / 2.0,
            (true, false) => lower,
            (false, true) => upper,
            (false, false) => 0.0,
        }
    };
    (alphas, b)
}

fn hinge_sgd_binary(
    x: &Array2<f64>,
    y: &[f64],
    cfg: &SvmConfig,
    salt: u64,
) -> (Array1<f64>, f64) {
    let n = x.nrows();
    let dim = x.ncols();
    let mut w = Array1::<f64>::zeros(dim);
    let mut b = 0.0f64;
    let mut rng =
        ChaCha8Rng::seed_from_u64(crate::util::derive_seed(cfg.seed, &format!("hinge:{salt}")));
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.sgd_epochs {
        order.shuffle(&mut rng);
        let lr = cfg.sgd_lr / (1.0 + epoch as f64 * 0.1);
        for &i in &order {
            let xi = x.row(i);
            let margin = y[i] * (w.dot(&xi) + b);
            if margin < 1.0 {
                for (wk, &xk) in w.iter_mut().zip(xi.iter()) {
                    *wk -= lr * (cfg.l2 * *wk - y[i] * xk);
                }
                b += lr * y[i];
            } else {
                w.mapv_inplace(|wk| wk - lr * cfg.l2 * wk);
            }
        }
    }
    (w, b)
}

impl SvmModel {
    /// Per-class decision values, (n, classes).
    pub fn decision_values(&self, x: &Array2<f64>) -> Array2<f64> {
        let n = x.nrows();
        let mut values = Array2::zeros((n, self.classes.len()));
        match &self.trained {
            Trained::Kernel {
                support,
                coeffs,
                biases,
            } => {
                for i in 0..n {
                    let xi = x.row(i);
                    for (ci, b) in biases.iter().enumerate() {
                        let mut f = *b;
                        for s in 0..support.nrows() {
                            let coeff = coeffs[[ci, s]];
                            if coeff != 0.0 {
                                f += coeff
                                    * kernel_value(
                                        &self.config,
                                        support.row(s).as_slice().expect("contiguous"),
                                        xi.as_slice().expect("contiguous"),
                                    );
                            }
                        }
                        values[[i, ci]] = f;
                    }
                }
            }
            Trained::Linear { weights, biases } => {
                for i in 0..n {
                    let xi = x.row(i);
                    for ci in 0..self.classes.len() {
                        values[[i, ci]] = weights.row(ci).dot(&xi) + biases[ci];
                    }
                }
            }
        }
        values
    }

    /// Argmax of the one-vs-rest decision values.
    pub fn predict(&self, x: &Array2<f64>) -> Vec<usize> {
        self.decision_values(x)
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0usize;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                self.classes[best]
            })
            .collect()
    }
}

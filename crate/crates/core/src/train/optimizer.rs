use std::collections::BTreeMap;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::models::Param;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    AdamW,
    Sgd,
}

/// Per-component base learning rates keyed by parameter group. Groups
/// without an entry fall back to the schedule's rate; entries scale with
/// the schedule's decay factor.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LrMap(pub BTreeMap<String, f64>);

impl LrMap {
    pub fn single(group: &str, lr: f64) -> Self {
        let mut map = BTreeMap::new();
        map.insert(group.to_string(), lr);
        LrMap(map)
    }

    pub fn base_lr(&self, group: &str, default: f64) -> f64 {
        *self.0.get(group).unwrap_or(&default)
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Adam / AdamW / SGD over a fixed parameter list. Frozen parameters
/// receive zero updates and keep no state.
pub struct Optimizer {
    kind: OptimizerKind,
    weight_decay: f64,
    moments: Vec<Option<(ArrayD<f64>, ArrayD<f64>)>>,
    t: usize,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, weight_decay: f64) -> Self {
        Optimizer {
            kind,
            weight_decay,
            moments: Vec::new(),
            t: 0,
        }
    }

    /// Applies one update step; `lr_for` supplies the effective learning
    /// rate per parameter group at the current epoch.
    pub fn step(&mut self, params: &mut [&mut Param], lr_for: &dyn Fn(&str) -> f64) {
        if self.moments.len() != params.len() {
            self.moments = params.iter().map(|_| None).collect();
        }
        self.t += 1;
        for (idx, p) in params.iter_mut().enumerate() {
            if p.frozen {
                continue;
            }
            let lr = lr_for(&p.group);
            match self.kind {
                OptimizerKind::Sgd => {
                    let wd = self.weight_decay;
                    ndarray::Zip::from(&mut p.value)
                        .and(&p.grad)
                        .for_each(|w, &g| *w -= lr * (g + wd * *w));
                }
                OptimizerKind::Adam | OptimizerKind::AdamW => {
                    let decoupled = self.kind == OptimizerKind::AdamW;
                    let (m, v) = self.moments[idx].get_or_insert_with(|| {
                        (ArrayD::zeros(p.value.raw_dim()), ArrayD::zeros(p.value.raw_dim()))
                    });
                    let bc1 = 1.0 - BETA1.powi(self.t as i32);
                    let bc2 = 1.0 - BETA2.powi(self.t as i32);
                    let wd = self.weight_decay;
                    ndarray::Zip::from(&mut p.value)
                        .and(m)
                        .and(v)
                        .and(&p.grad)
                        .for_each(|w, m, v, &g_raw| {
                            // classic Adam folds weight decay into the
                            // gradient; AdamW decouples it
                            let g = if decoupled { g_raw } else { g_raw + wd * *w };
                            *m = BETA1 * *m + (1.0 - BETA1) * g;
                            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                            let m_hat = *m / bc1;
                            let v_hat = *v / bc2;
                            *w -= lr * m_hat / (v_hat.sqrt() + EPS);
                            if decoupled {
                                *w -= lr * wd * *w;
                            }
                        });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    fn param(value: f64, frozen: bool) -> Param {
        let mut p = Param::from_value("w", "model", ArrayD::from_elem(IxDyn(&[1]), value));
        p.frozen = frozen;
        p
    }

    #[test]
    fn sgd_moves_against_the_gradient() {
        let mut p = param(1.0, false);
        p.grad.fill(0.5);
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.0);
        let mut params = vec![&mut p];
        opt.step(&mut params, &|_| 0.1);
        assert!((p.value[[0]] - 0.95).abs() < 1e-12);
    }

    #[test]
    fn frozen_params_are_bit_identical_after_steps() {
        let mut p = param(1.25, true);
        let before = p.checksum();
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.1);
        for _ in 0..10 {
            p.grad.fill(1.0);
            let mut params = vec![&mut p];
            opt.step(&mut params, &|_| 0.1);
        }
        assert_eq!(p.checksum(), before);
    }

    #[test]
    fn lr_map_routes_groups() {
        let map = LrMap::single("encoder", 1e-5);
        assert_eq!(map.base_lr("encoder", 1e-4), 1e-5);
        assert_eq!(map.base_lr("classifier", 1e-4), 1e-4);
    }

    #[test]
    fn adamw_decay_is_decoupled_from_the_moment_estimates() {
        // with zero gradient, AdamW still shrinks weights; Adam does not
        let mut p1 = param(1.0, false);
        let mut opt = Optimizer::new(OptimizerKind::AdamW, 0.1);
        let mut params = vec![&mut p1];
        opt.step(&mut params, &|_| 0.5);
        assert!(p1.value[[0]] < 1.0);

        let mut p2 = param(1.0, false);
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.1);
        let mut params = vec![&mut p2];
        opt.step(&mut params, &|_| 0.5);
        // classic Adam with wd folds decay into the gradient, which
        // moves the weight, but via the moment estimates
        assert!(p2.value[[0]] < 1.0);
    }
}

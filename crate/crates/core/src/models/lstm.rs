//! Bidirectional LSTM with additive self-attention over frozen token
//! embeddings, ending in a dense layer and log-softmax.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Linear, LogSoftmax};
use super::param::{Param, ParamInit};
use super::{BatchInput, Mode, ModelError, ModelOutput, Result, TrainableClassifier};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM direction. Gate layout in the stacked 4H dimension: input,
/// forget, cell, output.
struct LstmCell {
    w_ih: Param, // (4H, D)
    w_hh: Param, // (4H, H)
    b: Param,    // (4H)
    hidden: usize,
}

struct StepCache {
    x: Array1<f64>,
    h_prev: Array1<f64>,
    c_prev: Array1<f64>,
    i: Array1<f64>,
    f: Array1<f64>,
    g: Array1<f64>,
    o: Array1<f64>,
    c: Array1<f64>,
}

impl LstmCell {
    fn new(name: &str, group: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        LstmCell {
            w_ih: Param::new(
                format!("{name}.w_ih"),
                group,
                &[4 * hidden, input],
                ParamInit::KaimingUniform { fan_in: input },
                rng,
            ),
            w_hh: Param::new(
                format!("{name}.w_hh"),
                group,
                &[4 * hidden, hidden],
                ParamInit::KaimingUniform { fan_in: hidden },
                rng,
            ),
            b: Param::new(format!("{name}.b"), group, &[4 * hidden], ParamInit::Zeros, rng),
            hidden,
        }
    }

    /// Runs the cell over a (T, D) sequence; returns (T, H) hidden states
    /// and the per-step caches needed for backprop through time.
    fn forward_seq(&self, xs: &Array2<f64>) -> (Array2<f64>, Vec<StepCache>) {
        let t_len = xs.nrows();
        let h_dim = self.hidden;
        let w_ih = self.w_ih.value.view().into_dimensionality::<ndarray::Ix2>().expect("2d");
        let w_hh = self.w_hh.value.view().into_dimensionality::<ndarray::Ix2>().expect("2d");
        let b = self.b.value.view().into_dimensionality::<ndarray::Ix1>().expect("1d");

        let mut hs = Array2::zeros((t_len, h_dim));
        let mut caches = Vec::with_capacity(t_len);
        let mut h = Array1::zeros(h_dim);
        let mut c = Array1::zeros(h_dim);
        for t in 0..t_len {
            let x = xs.row(t).to_owned();
            let z = w_ih.dot(&x) + w_hh.dot(&h) + &b;
            let mut i = Array1::zeros(h_dim);
            let mut f = Array1::zeros(h_dim);
            let mut g = Array1::zeros(h_dim);
            let mut o = Array1::zeros(h_dim);
            for k in 0..h_dim {
                i[k] = sigmoid(z[k]);
                f[k] = sigmoid(z[h_dim + k]);
                g[k] = z[2 * h_dim + k].tanh();
                o[k] = sigmoid(z[3 * h_dim + k]);
            }
            let c_new = &f * &c + &i * &g;
            let mut h_new = Array1::zeros(h_dim);
            for k in 0..h_dim {
                h_new[k] = o[k] * c_new[k].tanh();
            }
            caches.push(StepCache {
                x,
                h_prev: h.clone(),
                c_prev: c.clone(),
                i,
                f,
                g,
                o,
                c: c_new.clone(),
            });
            hs.row_mut(t).assign(&h_new);
            h = h_new;
            c = c_new;
        }
        (hs, caches)
    }

    /// BPTT given per-step dL/dh; accumulates parameter grads and returns
    /// dL/dx per step.
    fn backward_seq(&mut self, caches: &[StepCache], dhs: &Array2<f64>) -> Array2<f64> {
        let t_len = caches.len();
        let h_dim = self.hidden;
        let in_dim = self.w_ih.value.shape()[1];
        let w_ih = self.w_ih.value.view().into_dimensionality::<ndarray::Ix2>().expect("2d").to_owned();
        let w_hh = self.w_hh.value.view().into_dimensionality::<ndarray::Ix2>().expect("2d").to_owned();

        let mut dw_ih = Array2::<f64>::zeros((4 * h_dim, in_dim));
        let mut dw_hh = Array2::<f64>::zeros((4 * h_dim, h_dim));
        let mut db = Array1::<f64>::zeros(4 * h_dim);
        let mut dxs = Array2::<f64>::zeros((t_len, in_dim));

        let mut dh_next = Array1::<f64>::zeros(h_dim);
        let mut dc_next = Array1::<f64>::zeros(h_dim);
        for t in (0..t_len).rev() {
            let cache = &caches[t];
            let dh = dhs.row(t).to_owned() + &dh_next;
            let mut dz = Array1::<f64>::zeros(4 * h_dim);
            let mut dc = dc_next.clone();
            for k in 0..h_dim {
                let tanh_c = cache.c[k].tanh();
                let dhk = dh[k];
                // output gate and cell state
                let do_ = dhk * tanh_c;
                dc[k] += dhk * cache.o[k] * (1.0 - tanh_c * tanh_c);
                let di = dc[k] * cache.g[k];
                let df = dc[k] * cache.c_prev[k];
                let dg = dc[k] * cache.i[k];
                dz[k] = di * cache.i[k] * (1.0 - cache.i[k]);
                dz[h_dim + k] = df * cache.f[k] * (1.0 - cache.f[k]);
                dz[2 * h_dim + k] = dg * (1.0 - cache.g[k] * cache.g[k]);
                dz[3 * h_dim + k] = do_ * cache.o[k] * (1.0 - cache.o[k]);
            }
            // parameter and input gradients for this step
            for r in 0..4 * h_dim {
                let dzr = dz[r];
                if dzr == 0.0 {
                    continue;
                }
                db[r] += dzr;
                for cidx in 0..in_dim {
                    dw_ih[[r, cidx]] += dzr * cache.x[cidx];
                }
                for cidx in 0..h_dim {
                    dw_hh[[r, cidx]] += dzr * cache.h_prev[cidx];
                }
            }
            dxs.row_mut(t).assign(&w_ih.t().dot(&dz));
            dh_next = w_hh.t().dot(&dz);
            for k in 0..h_dim {
                dc_next[k] = dc[k] * cache.f[k];
            }
        }
        self.w_ih.grad += &dw_ih.into_dyn();
        self.w_hh.grad += &dw_hh.into_dyn();
        self.b.grad += &db.into_dyn();
        dxs
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w_ih, &mut self.w_hh, &mut self.b]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilstmAttnConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub num_classes: usize,
    pub seed: u64,
}

impl BilstmAttnConfig {
    pub fn default_private(seed: u64) -> Self {
        BilstmAttnConfig {
            embedding_dim: 768,
            hidden_dim: 128,
            attention_dim: 64,
            num_classes: 3,
            seed,
        }
    }
}

struct SeqCache {
    fwd_caches: Vec<StepCache>,
    bwd_caches: Vec<StepCache>,
    states: Array2<f64>, // (T, 2H) concatenated hidden states
    attn_pre_tanh: Array2<f64>,
    alphas: Array1<f64>,
}

/// Frozen embeddings -> BiLSTM -> additive self-attention -> dense output.
pub struct BilstmAttn {
    pub config: BilstmAttnConfig,
    fwd: LstmCell,
    bwd: LstmCell,
    attn_w: Param, // (A, 2H)
    attn_b: Param, // (A)
    attn_v: Param, // (A)
    out: Linear,
    logsoftmax: LogSoftmax,
    seq_caches: Vec<SeqCache>,
    /// Attention weights from the most recent forward, padded with zeros
    /// to the longest sequence in the batch.
    pub last_attention: Vec<Vec<f64>>,
}

impl BilstmAttn {
    pub fn new(config: BilstmAttnConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let fwd = LstmCell::new("bilstm.fwd", "classifier", config.embedding_dim, config.hidden_dim, &mut rng);
        let bwd = LstmCell::new("bilstm.bwd", "classifier", config.embedding_dim, config.hidden_dim, &mut rng);
        let attn_w = Param::new(
            "attn.w",
            "classifier",
            &[config.attention_dim, 2 * config.hidden_dim],
            ParamInit::KaimingUniform {
                fan_in: 2 * config.hidden_dim,
            },
            &mut rng,
        );
        let attn_b = Param::new("attn.b", "classifier", &[config.attention_dim], ParamInit::Zeros, &mut rng);
        let attn_v = Param::new(
            "attn.v",
            "classifier",
            &[config.attention_dim],
            ParamInit::KaimingUniform {
                fan_in: config.attention_dim,
            },
            &mut rng,
        );
        let out = Linear::new("out", "classifier", 2 * config.hidden_dim, config.num_classes, &mut rng);
        BilstmAttn {
            config,
            fwd,
            bwd,
            attn_w,
            attn_b,
            attn_v,
            out,
            logsoftmax: LogSoftmax::new(),
            seq_caches: Vec::new(),
            last_attention: Vec::new(),
        }
    }

    /// Forward over variable-length sequences; `sequences[i]` is
    /// (T_i, embedding_dim).
    pub fn forward_sequences(&mut self, sequences: &[Array2<f64>], mode: Mode) -> Result<Array2<f64>> {
        let n = sequences.len();
        let h2 = 2 * self.config.hidden_dim;
        self.seq_caches.clear();
        self.last_attention.clear();
        let max_t = sequences.iter().map(|s| s.nrows()).max().unwrap_or(0);

        let w = self.attn_w.value.view().into_dimensionality::<ndarray::Ix2>().expect("2d").to_owned();
        let b = self.attn_b.value.view().into_dimensionality::<ndarray::Ix1>().expect("1d").to_owned();
        let v = self.attn_v.value.view().into_dimensionality::<ndarray::Ix1>().expect("1d").to_owned();

        let mut contexts = Array2::zeros((n, h2));
        for (idx, xs) in sequences.iter().enumerate() {
            let t_len = xs.nrows();
            if t_len == 0 {
                return Err(ModelError::EmptySequence(idx));
            }
            if xs.ncols() != self.config.embedding_dim {
                return Err(ModelError::ShapeMismatch(format!(
                    "sequence {idx} has dim {}, expected {}",
                    xs.ncols(),
                    self.config.embedding_dim
                )));
            }
            let (h_fwd, fwd_caches) = self.fwd.forward_seq(xs);
            let mut xs_rev = Array2::zeros(xs.raw_dim());
            for t in 0..t_len {
                xs_rev.row_mut(t).assign(&xs.row(t_len - 1 - t));
            }
            let (h_bwd_rev, bwd_caches) = self.bwd.forward_seq(&xs_rev);

            let mut states = Array2::zeros((t_len, h2));
            for t in 0..t_len {
                for k in 0..self.config.hidden_dim {
                    states[[t, k]] = h_fwd[[t, k]];
                    states[[t, self.config.hidden_dim + k]] = h_bwd_rev[[t_len - 1 - t, k]];
                }
            }

            // additive attention over all (valid) positions
            let mut pre_tanh = Array2::zeros((t_len, self.config.attention_dim));
            let mut scores = Array1::zeros(t_len);
            for t in 0..t_len {
                let u = w.dot(&states.row(t).to_owned()) + &b;
                pre_tanh.row_mut(t).assign(&u);
                scores[t] = u.mapv(f64::tanh).dot(&v);
            }
            let max_score = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exp: Array1<f64> = scores.mapv(|s| (s - max_score).exp());
            let alphas = &exp / exp.sum();

            let mut ctx = Array1::zeros(h2);
            for t in 0..t_len {
                ctx += &(states.row(t).to_owned() * alphas[t]);
            }
            contexts.row_mut(idx).assign(&ctx);

            let mut padded = alphas.to_vec();
            padded.resize(max_t, 0.0);
            self.last_attention.push(padded);

            if mode == Mode::Train {
                self.seq_caches.push(SeqCache {
                    fwd_caches,
                    bwd_caches,
                    states,
                    attn_pre_tanh: pre_tanh,
                    alphas: alphas.to_owned(),
                });
            }
        }

        let logits = self.out.forward(&contexts, mode);
        Ok(self.logsoftmax.forward(&logits, mode))
    }
}

impl TrainableClassifier for BilstmAttn {
    fn forward(&mut self, batch: &BatchInput, mode: Mode) -> Result<ModelOutput> {
        let BatchInput::Sequences(seqs) = batch else {
            return Err(ModelError::WrongInputKind {
                expected: "sequences",
                got: batch.kind(),
            });
        };
        Ok(ModelOutput {
            level_logp: self.forward_sequences(seqs, mode)?,
            gender_logp: None,
        })
    }

    fn backward(&mut self, dlevel: &Array2<f64>, _dgender: Option<&Array2<f64>>) {
        let g = self.logsoftmax.backward(dlevel);
        let dctx = self.out.backward(&g); // (N, 2H)
        let h_dim = self.config.hidden_dim;
        let a_dim = self.config.attention_dim;

        let w = self.attn_w.value.view().into_dimensionality::<ndarray::Ix2>().expect("2d").to_owned();
        let v = self.attn_v.value.view().into_dimensionality::<ndarray::Ix1>().expect("1d").to_owned();

        let caches = std::mem::take(&mut self.seq_caches);
        for (idx, cache) in caches.iter().enumerate() {
            let t_len = cache.states.nrows();
            let dctx_i = dctx.row(idx).to_owned();

            // through the attention-weighted sum
            let mut dalpha = Array1::<f64>::zeros(t_len);
            let mut dstates = Array2::<f64>::zeros((t_len, 2 * h_dim));
            for t in 0..t_len {
                dalpha[t] = cache.states.row(t).dot(&dctx_i);
                dstates
                    .row_mut(t)
                    .assign(&(dctx_i.clone() * cache.alphas[t]));
            }
            // softmax jacobian
            let weighted: f64 = (0..t_len).map(|t| cache.alphas[t] * dalpha[t]).sum();
            let mut dscore = Array1::<f64>::zeros(t_len);
            for t in 0..t_len {
                dscore[t] = cache.alphas[t] * (dalpha[t] - weighted);
            }
            // through score_t = v . tanh(W s_t + b)
            for t in 0..t_len {
                if dscore[t] == 0.0 {
                    continue;
                }
                let mut dpre = Array1::<f64>::zeros(a_dim);
                for a in 0..a_dim {
                    let th = cache.attn_pre_tanh[[t, a]].tanh();
                    self.attn_v.grad[[a]] += dscore[t] * th;
                    dpre[a] = dscore[t] * v[a] * (1.0 - th * th);
                }
                for a in 0..a_dim {
                    self.attn_b.grad[[a]] += dpre[a];
                    for k in 0..2 * h_dim {
                        self.attn_w.grad[[a, k]] += dpre[a] * cache.states[[t, k]];
                    }
                }
                dstates.row_mut(t).scaled_add(1.0, &w.t().dot(&dpre));
            }

            // split into the two directions and run BPTT
            let mut dh_fwd = Array2::<f64>::zeros((t_len, h_dim));
            let mut dh_bwd_rev = Array2::<f64>::zeros((t_len, h_dim));
            for t in 0..t_len {
                for k in 0..h_dim {
                    dh_fwd[[t, k]] = dstates[[t, k]];
                    dh_bwd_rev[[t_len - 1 - t, k]] = dstates[[t, h_dim + k]];
                }
            }
            let _ = self.fwd.backward_seq(&cache.fwd_caches, &dh_fwd);
            let _ = self.bwd.backward_seq(&cache.bwd_caches, &dh_bwd_rev);
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.fwd.params_mut();
        p.extend(self.bwd.params_mut());
        p.push(&mut self.attn_w);
        p.push(&mut self.attn_b);
        p.push(&mut self.attn_v);
        p.extend(self.out.params_mut());
        p
    }

    fn reseed_dropout(&mut self, _salt: u64) {}
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config() -> BilstmAttnConfig {
        BilstmAttnConfig {
            embedding_dim: 6,
            hidden_dim: 4,
            attention_dim: 3,
            num_classes: 3,
            seed: 11,
        }
    }

    fn seq(t: usize, dim: usize, salt: f64) -> Array2<f64> {
        Array2::from_shape_fn((t, dim), |(i, j)| ((i * dim + j) as f64 * 0.17 + salt).sin())
    }

    #[test]
    fn length_one_sequence_has_attention_weight_exactly_one() {
        let mut model = BilstmAttn::new(toy_config());
        let out = model
            .forward_sequences(&[seq(1, 6, 0.0)], Mode::Eval)
            .unwrap();
        assert_eq!(out.dim(), (1, 3));
        assert_eq!(model.last_attention[0], vec![1.0]);
    }

    #[test]
    fn attention_weights_are_a_distribution_and_padding_gets_zero() {
        let mut model = BilstmAttn::new(toy_config());
        let batch = vec![seq(5, 6, 0.0), seq(2, 6, 1.0)];
        let out = model.forward_sequences(&batch, Mode::Eval).unwrap();
        assert_eq!(out.dim(), (2, 3));
        // first sequence: 5 valid weights summing to 1
        let a0: f64 = model.last_attention[0].iter().sum();
        assert!((a0 - 1.0).abs() < 1e-9);
        assert!(model.last_attention[0].iter().all(|&w| w >= 0.0));
        // second sequence: padded positions 2..5 carry exactly zero
        assert_eq!(&model.last_attention[1][2..], &[0.0, 0.0, 0.0]);
        let a1: f64 = model.last_attention[1][..2].iter().sum();
        assert!((a1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn output_rows_are_log_distributions_for_the_private_scheme() {
        let mut model = BilstmAttn::new(toy_config());
        let out = model
            .forward_sequences(&[seq(4, 6, 0.3), seq(7, 6, 0.9)], Mode::Eval)
            .unwrap();
        for row in out.rows() {
            let sum: f64 = row.iter().map(|x| x.exp()).sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let mut model = BilstmAttn::new(toy_config());
        let empty = Array2::<f64>::zeros((0, 6));
        assert!(matches!(
            model.forward_sequences(&[empty], Mode::Eval),
            Err(ModelError::EmptySequence(0))
        ));
    }
}

//! Central-finite-difference gradient verification for the trainable
//! architectures, run at toy sizes by the test suites.

/// Outcome of one gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_param: String,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Compares analytic gradients against central differences.
///
/// `loss` must evaluate the model's scalar loss on a fixed batch; when
/// its second argument is true it must also run the backward pass so
/// parameter grads are populated. The closure is responsible for making
/// every call deterministic (reseeding dropout streams each time).
pub fn gradcheck<M, F>(model: &mut M, mut loss: F, eps: f64) -> GradCheckReport
where
    M: super::TrainableClassifier + ?Sized,
    F: FnMut(&mut M, bool) -> f64,
{
    model.zero_grads();
    let _ = loss(model, true);
    let analytic: Vec<(String, ndarray::ArrayD<f64>)> = model
        .params_mut()
        .iter()
        .map(|p| (p.name.clone(), p.grad.clone()))
        .collect();

    let mut checked = 0usize;
    let mut max_rel_err = 0.0f64;
    let mut worst_param = String::new();
    let n_params = analytic.len();
    for pi in 0..n_params {
        let n_elems = analytic[pi].1.len();
        for k in 0..n_elems {
            {
                let mut params = model.params_mut();
                let slice = params[pi].value.as_slice_mut().expect("contiguous");
                slice[k] += eps;
            }
            let plus = loss(model, false);
            {
                let mut params = model.params_mut();
                let slice = params[pi].value.as_slice_mut().expect("contiguous");
                slice[k] -= 2.0 * eps;
            }
            let minus = loss(model, false);
            {
                let mut params = model.params_mut();
                let slice = params[pi].value.as_slice_mut().expect("contiguous");
                slice[k] += eps;
            }

            let fd = (plus - minus) / (2.0 * eps);
            let a = analytic[pi].1.as_slice().expect("contiguous")[k];
            let denom = a.abs().max(fd.abs());
            let rel = if denom < 1e-8 {
                0.0
            } else {
                (a - fd).abs() / denom
            };
            if rel > max_rel_err {
                max_rel_err = rel;
                worst_param = format!("{}[{k}]", analytic[pi].0);
            }
            checked += 1;
        }
    }

    GradCheckReport {
        checked,
        max_rel_err,
        worst_param,
    }
}

/// Negative log-likelihood of log-probabilities, with the gradient that
/// drives the backward pass; shared by the gradcheck closures.
pub fn nll(logp: &ndarray::Array2<f64>, targets: &[usize]) -> (f64, ndarray::Array2<f64>) {
    let n = targets.len();
    let mut loss = 0.0;
    let mut grad = ndarray::Array2::zeros(logp.raw_dim());
    for (i, &t) in targets.iter().enumerate() {
        loss -= logp[[i, t]];
        grad[[i, t]] = -1.0 / n as f64;
    }
    (loss / n as f64, grad)
}

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A trainable (or frozen) tensor with its gradient accumulator.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    /// Optimizer group; per-component learning rates key off this.
    pub group: String,
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
    pub frozen: bool,
}

pub enum ParamInit {
    Zeros,
    /// Uniform(-a, a) with a = sqrt(6 / fan_in).
    KaimingUniform { fan_in: usize },
}

impl Param {
    pub fn new(
        name: impl Into<String>,
        group: impl Into<String>,
        shape: &[usize],
        init: ParamInit,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let value = match init {
            ParamInit::Zeros => ArrayD::zeros(IxDyn(shape)),
            ParamInit::KaimingUniform { fan_in } => {
                let a = (6.0 / fan_in.max(1) as f64).sqrt();
                ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.random_range(-a..a))
            }
        };
        let grad = ArrayD::zeros(IxDyn(shape));
        Param {
            name: name.into(),
            group: group.into(),
            value,
            grad,
            frozen: false,
        }
    }

    pub fn from_value(name: impl Into<String>, group: impl Into<String>, value: ArrayD<f64>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Param {
            name: name.into(),
            group: group.into(),
            value,
            grad,
            frozen: false,
        }
    }

    pub fn frozen(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Bit-pattern digest of the values; frozen-parameter tests compare
    /// these before and after training.
    pub fn checksum(&self) -> String {
        let mut bytes = Vec::with_capacity(self.value.len() * 8);
        for v in self.value.iter() {
            bytes.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        crate::util::sha256_hex(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn checksum_tracks_bit_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = Param::new("w", "model", &[3, 2], ParamInit::KaimingUniform { fan_in: 2 }, &mut rng);
        let before = p.checksum();
        assert_eq!(before, p.checksum());
        // flip the lowest mantissa bit
        p.value[[0, 0]] = f64::from_bits(p.value[[0, 0]].to_bits() ^ 1);
        assert_ne!(before, p.checksum());
    }
}

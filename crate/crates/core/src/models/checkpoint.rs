//! Model checkpoints: a JSON header (config echo, parameter table,
//! frozen masks) followed by the little-endian f64 parameter blobs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::param::Param;
use super::{ModelError, Result};

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    group: String,
    shape: Vec<usize>,
    frozen: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config_echo: serde_json::Value,
    params: Vec<ParamEntry>,
}

pub struct Checkpoint {
    pub config_echo: serde_json::Value,
    pub params: Vec<(String, ArrayD<f64>)>,
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &[&Param],
    config_echo: serde_json::Value,
) -> Result<()> {
    let path = path.as_ref();
    let header = Header {
        config_echo,
        params: params
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                group: p.group.clone(),
                shape: p.value.shape().to_vec(),
                frozen: p.frozen,
            })
            .collect(),
    };
    let file = File::create(path).map_err(|e| ModelError::InvalidConfig(format!(
        "cannot write checkpoint {}: {e}",
        path.display()
    )))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| {
        ModelError::InvalidConfig(format!("checkpoint write {}: {e}", path.display()))
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("serializable")).map_err(io_err)?;
    for p in params {
        for v in p.value.iter() {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let err = |m: String| ModelError::InvalidConfig(format!("checkpoint {}: {m}", path.display()));
    let file = File::open(path).map_err(|e| err(e.to_string()))?;
    let mut r = BufReader::new(file);

    let mut header_line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = r.read(&mut byte).map_err(|e| err(e.to_string()))?;
        if n == 0 {
            return Err(err("missing header".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        header_line.push(byte[0]);
    }
    let header: Header =
        serde_json::from_slice(&header_line).map_err(|e| err(format!("bad header: {e}")))?;

    let mut params = Vec::with_capacity(header.params.len());
    for entry in &header.params {
        let count: usize = entry.shape.iter().product();
        let mut buf = vec![0u8; count * 8];
        r.read_exact(&mut buf).map_err(|e| err(e.to_string()))?;
        let values: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let arr = ArrayD::from_shape_vec(IxDyn(&entry.shape), values)
            .map_err(|e| err(e.to_string()))?;
        params.push((entry.name.clone(), arr));
    }
    Ok(Checkpoint {
        config_echo: header.config_echo,
        params,
    })
}

impl Checkpoint {
    /// Copies stored values into matching (by name) model parameters.
    pub fn apply(&self, params: &mut [&mut Param]) -> Result<()> {
        for (name, value) in &self.params {
            let target = params
                .iter_mut()
                .find(|p| &p.name == name)
                .ok_or_else(|| ModelError::InvalidConfig(format!("no parameter named {name:?}")))?;
            if target.value.shape() != value.shape() {
                return Err(ModelError::ShapeMismatch(format!(
                    "checkpoint param {name:?}: {:?} vs {:?}",
                    value.shape(),
                    target.value.shape()
                )));
            }
            target.value.assign(value);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Mlp, MlpConfig, TrainableClassifier};

    #[test]
    fn checkpoint_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut mlp = Mlp::new(MlpConfig {
            layer_sizes: (6, 4, 3),
            dropout_p: 0.1,
            seed: 9,
        });
        let params = mlp.params_mut();
        let refs: Vec<&Param> = params.iter().map(|p| &**p).collect();
        save_checkpoint(&path, &refs, serde_json::json!({"arch": "mlp"})).unwrap();

        let before: Vec<_> = mlp.params_mut().iter().map(|p| p.checksum()).collect();
        // scramble, then restore
        for p in mlp.params_mut() {
            p.value.fill(0.0);
        }
        let ckpt = load_checkpoint(&path).unwrap();
        let mut params = mlp.params_mut();
        ckpt.apply(&mut params).unwrap();
        drop(params);
        let after: Vec<_> = mlp.params_mut().iter().map(|p| p.checksum()).collect();
        assert_eq!(before, after);
        assert_eq!(ckpt.config_echo["arch"], "mlp");
    }
}

//! Feature file container: one JSON header line followed by the
//! row-major little-endian f32 matrix.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::clip::SourceSpan;
use super::fbank::{FbankConfig, FeatureMatrix};
use super::{DspError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureHeader {
    pub config: FbankConfig,
    pub source: Option<SourceSpan>,
    pub frames: usize,
    pub n_mels: usize,
    pub normalized: bool,
    /// Hash of the experiment config that produced this file, if any.
    pub config_hash: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFile {
    pub header: FeatureHeader,
    pub features: FeatureMatrix,
}

pub fn write_features(
    path: impl AsRef<Path>,
    features: &FeatureMatrix,
    config: &FbankConfig,
    source: Option<SourceSpan>,
    config_hash: Option<String>,
) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| DspError::Io {
        path: path.display().to_string(),
        source,
    };
    let header = FeatureHeader {
        config: config.clone(),
        source,
        frames: features.frames(),
        n_mels: features.n_mels(),
        normalized: features.normalized,
        config_hash,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", serde_json::to_string(&header).expect("serializable")).map_err(io_err)?;
    for &v in features.values.iter() {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureFile> {
    let path = path.as_ref();
    let io_err = |source| DspError::Io {
        path: path.display().to_string(),
        source,
    };
    let ff_err = |message: String| DspError::FeatureFile {
        path: path.display().to_string(),
        message,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut r = BufReader::new(file);

    let mut header_line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = r.read(&mut byte).map_err(io_err)?;
        if n == 0 {
            return Err(ff_err("missing header line".to_string()));
        }
        if byte[0] == b'\n' {
            break;
        }
        header_line.push(byte[0]);
    }
    let header: FeatureHeader = serde_json::from_slice(&header_line)
        .map_err(|e| ff_err(format!("bad header: {e}")))?;

    let mut body = Vec::new();
    r.read_to_end(&mut body).map_err(io_err)?;
    let expected = header.frames * header.n_mels * 4;
    if body.len() != expected {
        return Err(ff_err(format!(
            "matrix body is {} bytes, expected {expected}",
            body.len()
        )));
    }
    let mut data = Vec::with_capacity(header.frames * header.n_mels);
    for c in body.chunks_exact(4) {
        data.push(f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    }
    let values = Array2::from_shape_vec((header.frames, header.n_mels), data)
        .map_err(|e| ff_err(e.to_string()))?;
    let features = FeatureMatrix {
        values,
        frame_hop_ms: header.config.frame_hop_ms,
        normalized: header.normalized,
    };
    Ok(FeatureFile { header, features })
}

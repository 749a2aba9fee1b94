use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Result, SplitError};

/// A train/validation/test partition over speaker or essay ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: BTreeSet<String>,
    pub val: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub seed: u64,
    /// Human-readable descriptor of the protocol and its parameters.
    pub policy: String,
}

impl SplitAssignment {
    pub fn partitions(&self) -> [(&'static str, &BTreeSet<String>); 3] {
        [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ]
    }

    pub fn is_pairwise_disjoint(&self) -> bool {
        self.train.intersection(&self.val).next().is_none()
            && self.train.intersection(&self.test).next().is_none()
            && self.val.intersection(&self.test).next().is_none()
    }
}

pub fn save_split(split: &SplitAssignment, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| SplitError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::to_writer_pretty(BufWriter::new(file), split).map_err(|e| SplitError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_split(path: impl AsRef<Path>) -> Result<SplitAssignment> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| SplitError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| SplitError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

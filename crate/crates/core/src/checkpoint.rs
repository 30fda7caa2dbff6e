//! `IPCK1` checkpoint container.
//!
//! ```text
//! "IPCK1" | header_len: u32 LE | header JSON | f32 LE payloads in header order
//! ```
//!
//! The header lists every tensor (`name`, `shape`, `dtype`) and carries
//! free-form metadata such as the training configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus;
use crate::nn::{Layer, Mlp};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"IPCK1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error(transparent)]
    Write(#[from] corpus::CorpusError),
}

pub type Result<T, E = CheckpointError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub tensors: Vec<TensorInfo>,
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<(TensorInfo, Vec<f32>)>,
}

impl Checkpoint {
    pub fn new(meta: serde_json::Value) -> Self {
        Self {
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push((
            TensorInfo {
                name: name.into(),
                shape,
                dtype: "f32".into(),
            },
            data,
        ));
    }

    /// Adds every layer of `mlp` as `{prefix}.layer{i}.weight|bias`.
    pub fn push_mlp(&mut self, prefix: &str, mlp: &Mlp<f32>) {
        for (i, l) in mlp.layers().iter().enumerate() {
            self.push(format!("{prefix}.layer{i}.weight"), vec![l.n_out, l.n_in], l.weight.clone());
            self.push(format!("{prefix}.layer{i}.bias"), vec![l.n_out], l.bias.clone());
        }
    }

    pub fn tensor(&self, name: &str) -> Result<(&TensorInfo, &[f32])> {
        self.tensors
            .iter()
            .find(|(info, _)| info.name == name)
            .map(|(info, data)| (info, data.as_slice()))
            .ok_or_else(|| CheckpointError::MissingTensor(name.to_owned()))
    }

    pub fn mlp(&self, prefix: &str) -> Result<Mlp<f32>> {
        let mut layers = Vec::new();
        let mut i = 0;
        while let Ok((info, w)) = self.tensor(&format!("{prefix}.layer{i}.weight")) {
            let (_, b) = self.tensor(&format!("{prefix}.layer{i}.bias"))?;
            if info.shape.len() != 2 || info.shape[0] != b.len() {
                return Err(CheckpointError::Format(format!("bad shape for {}", info.name)));
            }
            layers.push(Layer {
                n_in: info.shape[1],
                n_out: info.shape[0],
                weight: w.to_vec(),
                bias: b.to_vec(),
            });
            i += 1;
        }
        if layers.is_empty() {
            return Err(CheckpointError::MissingTensor(format!("{prefix}.layer0.weight")));
        }
        Mlp::from_layers(layers).map_err(|e| CheckpointError::Format(e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            tensors: self.tensors.iter().map(|(i, _)| i.clone()).collect(),
            meta: self.meta.clone(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let payload: usize = self.tensors.iter().map(|(_, d)| d.len() * 4).sum();
        let mut out = Vec::with_capacity(9 + header.len() + payload);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, data) in &self.tensors {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 9 || &bytes[..5] != CHECKPOINT_MAGIC {
            return Err(CheckpointError::Format("missing IPCK1 magic".into()));
        }
        let header_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let header_end = 9 + header_len;
        if bytes.len() < header_end {
            return Err(CheckpointError::Format("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&bytes[9..header_end])?;
        let mut offset = header_end;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for info in header.tensors {
            if info.dtype != "f32" {
                return Err(CheckpointError::Format(format!("unsupported dtype {}", info.dtype)));
            }
            let n: usize = info.shape.iter().product();
            let end = offset + 4 * n;
            if bytes.len() < end {
                return Err(CheckpointError::Format(format!("truncated tensor {}", info.name)));
            }
            let data = bytes[offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push((info, data));
            offset = end;
        }
        if offset != bytes.len() {
            return Err(CheckpointError::Format(format!(
                "{} trailing bytes after the last tensor",
                bytes.len() - offset
            )));
        }
        Ok(Self {
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        corpus::write_atomic(path.as_ref(), &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_roundtrip_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mlp = Mlp::<f32>::five_layer(6, 8, 3, &mut rng).unwrap();
        let mut ck = Checkpoint::new(serde_json::json!({"note": "x"}));
        ck.push_mlp("g", &mlp);
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..5], b"IPCK1");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        let restored = back.mlp("g").unwrap();
        let x = [0.1f32, -0.4, 1.0, 0.0, 0.3, -1.0];
        let a = mlp.predict(&x).unwrap();
        let b = restored.predict(&x).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let mut ck = Checkpoint::new(serde_json::Value::Null);
        ck.push("t", vec![2, 2], vec![1.0; 4]);
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(b"IPCK0aaaa").is_err());
        assert!(ck.mlp("missing").is_err());
    }
}

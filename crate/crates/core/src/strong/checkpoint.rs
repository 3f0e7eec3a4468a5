use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::config::StrongConfig;
use super::model::{StrongModel, Vocabulary};
use super::train::EvalRecord;
use crate::backend::BackendSpec;
use crate::dataset::{ListenerKey, ScoreScale};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "utmos-strong-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained strong learner together with everything needed to run it.
#[derive(Debug, Clone)]
pub struct StrongCheckpoint {
    pub model: StrongModel,
    /// Listener embedding rows, in index order.
    pub listeners: Vec<ListenerKey>,
    /// Domain embedding rows, in index order.
    pub domains: Vec<String>,
    pub backend: Option<BackendSpec>,
    pub scale: ScoreScale,
    pub step: usize,
    pub dev_system_srcc: Option<f64>,
    pub history: Vec<EvalRecord>,
}

#[derive(Serialize, Deserialize)]
struct TensorBlob {
    name: String,
    shape: Vec<usize>,
    /// Little-endian f64 values, base64 encoded.
    data: String,
}

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    config: StrongConfig,
    feature_dim: usize,
    vocab: Vocabulary,
    listeners: Vec<ListenerKey>,
    domains: Vec<String>,
    backend: Option<BackendSpec>,
    scale: ScoreScale,
    step: usize,
    dev_system_srcc: Option<f64>,
    history: Vec<EvalRecord>,
    tensors: Vec<TensorBlob>,
}

fn encode_f64(xs: &[f64]) -> String {
    let bytes: Vec<u8> = xs.iter().flat_map(|v| v.to_le_bytes()).collect();
    B64.encode(bytes)
}

fn decode_f64(s: &str) -> Result<Vec<f64>> {
    let bytes = B64
        .decode(s)
        .map_err(|e| Error::Checkpoint(format!("bad tensor encoding: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint(
            "tensor byte length is not a multiple of 8".into(),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

impl StrongCheckpoint {
    pub fn to_json(&self) -> Result<String> {
        let m = &self.model;
        let tensors = m
            .layout
            .tensors
            .iter()
            .map(|t| TensorBlob {
                name: t.name.clone(),
                shape: t.shape.clone(),
                data: encode_f64(t.slot.of(&m.params)),
            })
            .collect();
        let c = Container {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: m.config,
            feature_dim: m.feature_dim,
            vocab: m.vocab.clone(),
            listeners: self.listeners.clone(),
            domains: self.domains.clone(),
            backend: self.backend.clone(),
            scale: self.scale,
            step: self.step,
            dev_system_srcc: self.dev_system_srcc,
            history: self.history.clone(),
            tensors,
        };
        serde_json::to_string_pretty(&c).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Container = serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unexpected format {:?}",
                c.format
            )));
        }
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                c.version
            )));
        }
        let mut model = StrongModel::zeros(
            c.config,
            c.feature_dim,
            c.listeners.len(),
            c.domains.len(),
            c.vocab,
        )?;
        if model.layout.tensors.len() != c.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                model.layout.tensors.len(),
                c.tensors.len()
            )));
        }
        for (info, blob) in model.layout.tensors.clone().iter().zip(&c.tensors) {
            if info.name != blob.name || info.shape != blob.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    blob.name, blob.shape, info.name, info.shape
                )));
            }
            let data = decode_f64(&blob.data)?;
            if data.len() != info.slot.len {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has {} values",
                    blob.name,
                    data.len()
                )));
            }
            info.slot.of_mut(&mut model.params).copy_from_slice(&data);
        }
        Ok(Self {
            model,
            listeners: c.listeners,
            domains: c.domains,
            backend: c.backend,
            scale: c.scale,
            step: c.step,
            dev_system_srcc: c.dev_system_srcc,
            history: c.history,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

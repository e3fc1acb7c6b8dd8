//! Self-describing model checkpoints.
//!
//! A checkpoint is a single JSON document holding the configuration, gate
//! hyper-parameters, init seed, every named parameter tensor (little-endian
//! f64 bytes, base64), the edge mask state codes, and optionally the
//! normalisation statistics the model was trained under. Round-trips are
//! bit-exact; the returned hash is the SHA-256 of the file bytes.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::graph::{EdgeMask, GateParams};
use crate::tensor::Tensor;

use super::{Model, ModelConfig};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    data: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    config: ModelConfig,
    gate: GateParams,
    seed: u64,
    params: Vec<ParamRecord>,
    mask: String,
    norm_stats: Option<NormStats>,
}

/// A loaded checkpoint: the model, its edge mask and the normalisation
/// statistics it was trained with (if any).
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub mask: EdgeMask,
    pub norm_stats: Option<NormStats>,
}

fn encode_f64s(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

fn decode_f64s(text: &str, what: &str) -> Result<Vec<f64>> {
    let bytes = B64
        .decode(text)
        .map_err(|e| Error::artifact(format!("{what}: invalid base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::artifact(format!(
            "{what}: byte length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// Serialise a model (with its mask and optional normalisation stats) to
/// `path` and return the SHA-256 hex digest of the written bytes.
pub fn save_checkpoint(
    path: &Path,
    model: &Model,
    mask: &EdgeMask,
    norm_stats: Option<&NormStats>,
) -> Result<String> {
    if mask.n() != model.config.num_nodes() {
        return Err(Error::artifact(format!(
            "mask covers {} nodes, model has {}",
            mask.n(),
            model.config.num_nodes()
        )));
    }
    let params = model
        .params
        .iter()
        .map(|(name, t)| ParamRecord {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            data: encode_f64s(t.data()),
        })
        .collect();
    let file = CheckpointFile {
        format_version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        gate: model.gate,
        seed: model.seed,
        params,
        mask: B64.encode(mask.to_codes()),
        norm_stats: norm_stats.cloned(),
    };
    let mut bytes = serde_json::to_vec_pretty(&file)
        .map_err(|e| Error::artifact(format!("checkpoint serialisation: {e}")))?;
    bytes.push(b'\n');
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Load a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let file: CheckpointFile = serde_json::from_slice(&bytes)
        .map_err(|e| Error::artifact(format!("{}: malformed checkpoint: {e}", path.display())))?;
    if file.format_version != CHECKPOINT_VERSION {
        return Err(Error::artifact(format!(
            "checkpoint format version {} unsupported (expected {CHECKPOINT_VERSION})",
            file.format_version
        )));
    }

    let mut model = Model::new(file.config, file.gate, file.seed)?;
    if file.params.len() != model.params.len() {
        return Err(Error::artifact(format!(
            "checkpoint holds {} parameters, architecture defines {}",
            file.params.len(),
            model.params.len()
        )));
    }
    for record in &file.params {
        let data = decode_f64s(&record.data, &format!("parameter {:?}", record.name))?;
        let tensor = Tensor::from_vec(&record.shape, data)?;
        model
            .params
            .replace(&record.name, tensor)
            .map_err(|e| Error::artifact(format!("parameter {:?}: {e}", record.name)))?;
    }

    let codes = B64
        .decode(&file.mask)
        .map_err(|e| Error::artifact(format!("mask codes: invalid base64: {e}")))?;
    let mask = EdgeMask::from_codes(model.config.num_nodes(), &codes)?;
    Ok(Checkpoint { model, mask, norm_stats: file.norm_stats })
}

/// SHA-256 hex digest of a checkpoint file's bytes.
pub fn checkpoint_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

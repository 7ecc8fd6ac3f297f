//! Checkpoint container: an 8-byte magic, a little-endian `u32` format
//! version, a little-endian `u64` header length, a JSON header, then a
//! safetensors payload holding every network and optimizer tensor.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainState};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ATTRINV\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    step: usize,
    opt_g_steps: u64,
    opt_d_steps: u64,
    dtype: String,
    config: TrainConfig,
}

fn encode(state: &TrainState) -> Result<Vec<u8>> {
    let header = Header {
        step: state.step,
        opt_g_steps: state.opt_g.steps_taken(),
        opt_d_steps: state.opt_d.steps_taken(),
        dtype: state.generator.params().dtype().as_str().to_string(),
        config: state.config.clone(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;

    let mut tensors: Vec<(String, Tensor)> = Vec::new();
    let prefixed = |prefix: &str, items: Vec<(String, Tensor)>| {
        items.into_iter().map(move |(n, t)| (format!("{prefix}.{n}"), t)).collect::<Vec<_>>()
    };
    tensors.extend(prefixed("g", state.generator.params().snapshot()));
    tensors.extend(prefixed("d", state.discriminator.params().snapshot()));
    tensors.extend(prefixed("opt_g", state.opt_g.state()));
    tensors.extend(prefixed("opt_d", state.opt_d.state()));
    let payload = safetensors::tensor::serialize(tensors.iter().map(|(n, t)| (n.as_str(), t)), None)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;

    let mut out = Vec::with_capacity(20 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Writes the full training state, via a temporary file so a crash never
/// leaves a half-written checkpoint under the final name.
pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let bytes = encode(state)?;
    let tmp = path.with_extension("ckpt.tmp");
    std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn split_sections(bytes: &[u8]) -> Result<(Header, &[u8])> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic or truncated)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint format version {version}, this build reads version {CHECKPOINT_VERSION}"
        )));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let header_end = usize::try_from(header_len)
        .ok()
        .and_then(|l| l.checked_add(20))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::Checkpoint("checkpoint truncated inside header".into()))?;
    let header: Header = serde_json::from_slice(&bytes[20..header_end])
        .map_err(|e| Error::Checkpoint(format!("corrupt header: {e}")))?;
    Ok((header, &bytes[header_end..]))
}

fn take(tensors: &HashMap<String, Tensor>, prefix: &str) -> HashMap<String, Tensor> {
    let p = format!("{prefix}.");
    tensors
        .iter()
        .filter_map(|(k, v)| k.strip_prefix(&p).map(|rest| (rest.to_string(), v.clone())))
        .collect()
}

/// Rebuilds a training state from a checkpoint, using the configuration it
/// was saved with.
pub fn load_checkpoint(path: &Path, device: &Device) -> Result<TrainState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, payload) = split_sections(&bytes)?;
    let tensors = candle_core::safetensors::load_buffer(payload, device)
        .map_err(|e| Error::Checkpoint(format!("corrupt tensor payload: {e}")))?;
    let dtype = match header.dtype.as_str() {
        "f32" => DType::F32,
        "f64" => DType::F64,
        other => return Err(Error::Checkpoint(format!("unsupported parameter dtype {other}"))),
    };
    let mut state = TrainState::with_dtype(&header.config, device, dtype)?;
    state.generator.params().load_from(&take(&tensors, "g"))?;
    state.discriminator.params().load_from(&take(&tensors, "d"))?;
    state.opt_g.load_state(header.opt_g_steps, &take(&tensors, "opt_g"))?;
    state.opt_d.load_state(header.opt_d_steps, &take(&tensors, "opt_d"))?;
    state.step = header.step;
    Ok(state)
}

/// Like [`load_checkpoint`], but fails unless the saved configuration equals
/// `expected` apart from the step budget and logging cadence.
pub fn load_checkpoint_expecting(path: &Path, device: &Device, expected: &TrainConfig) -> Result<TrainState> {
    let state = load_checkpoint(path, device)?;
    let mut saved = state.config.clone();
    saved.steps = expected.steps;
    saved.checkpoint_every = expected.checkpoint_every;
    saved.log_every = expected.log_every;
    if &saved != expected {
        return Err(Error::Checkpoint(format!(
            "checkpoint {} was written with a different configuration",
            path.display()
        )));
    }
    let mut state = state;
    state.config = expected.clone();
    Ok(state)
}

//! Parameter checkpoints: `ACTBCKPT` magic, little-endian u32 header length,
//! a JSON header, then every parameter as little-endian f32 in layer order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{LayerSpec, Network};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ACTBCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub param_shapes: Vec<Vec<usize>>,
    pub seed: u64,
    pub dtype: String,
    /// Free-form data the owner wants to travel with the weights.
    #[serde(default)]
    pub metadata: serde_json::Value,
}

/// Rounds every parameter to f32, the precision checkpoints store.
pub fn round_to_f32(net: &mut Network) {
    for p in net.params_mut() {
        for v in p.data_mut() {
            *v = *v as f32 as f64;
        }
    }
}

pub fn encode(net: &Network, seed: u64, metadata: serde_json::Value) -> Vec<u8> {
    let header = CheckpointHeader {
        format_version: CHECKPOINT_VERSION,
        input_shape: net.input_shape().to_vec(),
        layers: net.layers().to_vec(),
        param_shapes: net.params().iter().map(|p| p.shape().to_vec()).collect(),
        seed,
        dtype: "f32-le".into(),
        metadata,
    };
    let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + 4 * net.num_parameters());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in net.params() {
        for &v in p.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(Network, CheckpointHeader)> {
    let bad = |detail: &str| Error::Format {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("missing checkpoint magic"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes
        .get(12..12 + hlen)
        .ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(body).map_err(|e| bad(&format!("header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION || header.dtype != "f32-le" {
        return Err(bad("unsupported checkpoint version or dtype"));
    }
    let mut net = Network::zeroed(header.input_shape.clone(), header.layers.clone())?;
    let shapes: Vec<Vec<usize>> = net.params().iter().map(|p| p.shape().to_vec()).collect();
    if shapes != header.param_shapes {
        return Err(bad("parameter shapes disagree with layer specs"));
    }
    let blob = &bytes[12 + hlen..];
    if blob.len() != 4 * net.num_parameters() {
        return Err(bad("parameter blob has the wrong length"));
    }
    let mut values = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    for p in net.params_mut() {
        for v in p.data_mut() {
            *v = values.next().unwrap();
        }
    }
    Ok((net, header))
}

pub fn save(path: &Path, net: &Network, seed: u64, metadata: serde_json::Value) -> Result<()> {
    fs::write(path, encode(net, seed, metadata)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(Network, CheckpointHeader)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

//! Binary checkpoints: `NGC1`, a little-endian u32 header length, a JSON
//! header, then every state array as little-endian f32 in
//! `Network::state_arrays` order.

use std::fs;
use std::path::Path;

use normgen_core::nn::{LayerSpec, Network};
use normgen_core::normalize::NormKind;
use normgen_core::Real;
use serde::{Deserialize, Serialize};

use crate::error::{format_err, io_err, Result};
use crate::io::sha256_hex;

pub const MAGIC: &[u8; 4] = b"NGC1";
pub const FORMAT_VERSION: u32 = 1;

/// Seeds that determine a trained network.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub init: u64,
    pub data_order: u64,
    pub corruption: Option<u64>,
    pub random_labels: Option<u64>,
}

/// Layer-wise normalization applied before saving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationInfo {
    pub kind: NormKind,
    pub rho: Vec<f64>,
    pub product_norm: f64,
    /// Digest of the checkpoint that was normalized.
    pub source_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub arch: String,
    pub input_shape: [usize; 3],
    pub class_count: usize,
    pub layers: Vec<LayerSpec>,
    /// Length of each stored array, checked on load.
    pub array_lengths: Vec<usize>,
    pub seeds: Seeds,
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub test_loss: Option<f64>,
    pub normalized: Option<NormalizationInfo>,
}

/// Metadata supplied when saving; shapes are taken from the network.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckpointMeta {
    pub seeds: Seeds,
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub test_loss: Option<f64>,
    pub normalized: Option<NormalizationInfo>,
}

impl CheckpointHeader {
    pub fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            seeds: self.seeds,
            epoch: self.epoch,
            train_loss: self.train_loss,
            test_loss: self.test_loss,
            normalized: self.normalized.clone(),
        }
    }
}

/// Serializes a network; values are stored as f32.
pub fn encode<T: Real>(net: &Network<T>, meta: &CheckpointMeta) -> Vec<u8> {
    let arrays = net.state_arrays();
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        arch: net.arch().to_string(),
        input_shape: net.input_shape(),
        class_count: net.class_count(),
        layers: net.specs(),
        array_lengths: arrays.iter().map(|a| a.len()).collect(),
        seeds: meta.seeds,
        epoch: meta.epoch,
        train_loss: meta.train_loss,
        test_loss: meta.test_loss,
        normalized: meta.normalized.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let body: usize = arrays.iter().map(|a| a.len() * 4).sum();
    let mut out = Vec::with_capacity(8 + json.len() + body);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for a in arrays {
        for v in a {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

/// Parses bytes produced by [`encode`]. `origin` names the source in errors.
pub fn decode<T: Real>(bytes: &[u8], origin: &Path) -> Result<(Network<T>, CheckpointHeader)> {
    let bad = |msg: String| format_err(origin, msg);
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)".into()));
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let json = bytes.get(8..8 + len).ok_or_else(|| bad("truncated header".into()))?;
    let probe: serde_json::Value = serde_json::from_slice(json).map_err(|e| bad(format!("header: {e}")))?;
    let version = probe.get("format_version").and_then(|v| v.as_u64());
    if version != Some(FORMAT_VERSION as u64) {
        return Err(bad(format!("unsupported format version {version:?}, expected {FORMAT_VERSION}")));
    }
    let header: CheckpointHeader = serde_json::from_value(probe).map_err(|e| bad(format!("header: {e}")))?;
    let mut net = Network::<T>::from_specs(header.arch.clone(), header.input_shape, header.class_count, &header.layers)
        .map_err(|e| bad(format!("layers: {e}")))?;
    let expected: usize = header.array_lengths.iter().sum::<usize>() * 4;
    let body = &bytes[8 + len..];
    if body.len() != expected {
        return Err(bad(format!("body has {} bytes, header declares {expected}", body.len())));
    }
    let mut arrays = net.state_arrays_mut();
    let lengths: Vec<usize> = arrays.iter().map(|a| a.len()).collect();
    if lengths != header.array_lengths {
        return Err(bad("array lengths do not match the layer list".into()));
    }
    let mut words = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    for a in arrays.iter_mut() {
        for v in a.iter_mut() {
            *v = T::of_f64(words.next().expect("length checked") as f64);
        }
    }
    Ok((net, header))
}

/// Writes a checkpoint and returns its SHA-256 digest.
pub fn save<T: Real>(net: &Network<T>, meta: &CheckpointMeta, path: &Path) -> Result<String> {
    let bytes = encode(net, meta);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, &bytes).map_err(io_err(path))?;
    Ok(sha256_hex(&bytes))
}

/// Reads a checkpoint; returns the network, header and file digest.
pub fn load<T: Real>(path: &Path) -> Result<(Network<T>, CheckpointHeader, String)> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let (net, header) = decode(&bytes, path)?;
    Ok((net, header, sha256_hex(&bytes)))
}

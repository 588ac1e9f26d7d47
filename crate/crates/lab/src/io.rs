//! MNIST IDX and CIFAR binary readers, plus file digests for provenance.

use std::fs;
use std::path::{Path, PathBuf};

use normgen_core::data::{Dataset, Provenance};
use normgen_core::Tensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{format_err, io_err, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_IMAGE_BYTES: usize = 3 * 32 * 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CifarVariant {
    Cifar10,
    Cifar100,
}

impl CifarVariant {
    /// Label bytes preceding each image.
    pub fn label_bytes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 1,
            CifarVariant::Cifar100 => 2,
        }
    }

    pub fn record_bytes(self) -> usize {
        self.label_bytes() + CIFAR_IMAGE_BYTES
    }

    pub fn class_count(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 10,
            CifarVariant::Cifar100 => 100,
        }
    }
}

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 over the contents of several files, in order.
pub fn digest_files(paths: &[&Path]) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        h.update(fs::read(p).map_err(io_err(p))?);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(io_err(path))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| format_err(path, "truncated header"))
}

fn check_labels(labels: &[u8], class_count: usize, path: &Path) -> Result<Vec<usize>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if (l as usize) < class_count {
                Ok(l as usize)
            } else {
                Err(format_err(path, format!("label {l} at index {i} out of range for {class_count} classes")))
            }
        })
        .collect()
}

/// Reads an IDX image/label pair; pixels become `[0, 1]` reals.
pub fn load_idx(images_path: &Path, labels_path: &Path, class_count: usize) -> Result<Dataset> {
    let img = read(images_path)?;
    let lab = read(labels_path)?;
    let magic = be_u32(&img, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(format_err(images_path, format!("bad IDX image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
    }
    let magic = be_u32(&lab, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(format_err(labels_path, format!("bad IDX label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let n = be_u32(&img, 4, images_path)? as usize;
    let rows = be_u32(&img, 8, images_path)? as usize;
    let cols = be_u32(&img, 12, images_path)? as usize;
    let n_labels = be_u32(&lab, 4, labels_path)? as usize;
    if n != n_labels {
        return Err(format_err(labels_path, format!("{n_labels} labels for {n} images")));
    }
    let want = 16 + n * rows * cols;
    if img.len() != want {
        return Err(format_err(images_path, format!("expected {want} bytes, found {}", img.len())));
    }
    if lab.len() != 8 + n {
        return Err(format_err(labels_path, format!("expected {} bytes, found {}", 8 + n, lab.len())));
    }
    let labels = check_labels(&lab[8..], class_count, labels_path)?;
    let pixels = img[16..].iter().map(|&b| b as f32 / 255.0).collect();
    let images = Tensor::new(vec![n, 1, rows, cols], pixels)?;
    let prov = Provenance { source_digest: digest_files(&[images_path, labels_path])?, ..Default::default() };
    Ok(Dataset::new(images, labels, class_count, prov)?)
}

/// Reads CIFAR binary batches; CIFAR-100 records use the fine label (second byte).
pub fn load_cifar_binary(paths: &[PathBuf], variant: CifarVariant) -> Result<Dataset> {
    if paths.is_empty() {
        return Err(crate::LabError::Invalid("no CIFAR files given".into()));
    }
    let rec = variant.record_bytes();
    let mut pixels = Vec::new();
    let mut raw_labels = Vec::new();
    for path in paths {
        let bytes = read(path)?;
        if bytes.is_empty() || bytes.len() % rec != 0 {
            return Err(format_err(path, format!("length {} is not a multiple of the {rec}-byte record", bytes.len())));
        }
        for r in bytes.chunks_exact(rec) {
            raw_labels.push(r[variant.label_bytes() - 1]);
            pixels.extend(r[variant.label_bytes()..].iter().map(|&b| b as f32 / 255.0));
        }
    }
    let labels = check_labels(&raw_labels, variant.class_count(), &paths[0])?;
    let n = labels.len();
    let images = Tensor::new(vec![n, 3, 32, 32], pixels)?;
    let refs: Vec<&Path> = paths.iter().map(|p| p.as_path()).collect();
    let prov = Provenance { source_digest: digest_files(&refs)?, ..Default::default() };
    Ok(Dataset::new(images, labels, variant.class_count(), prov)?)
}

/// Standard MNIST file names inside a directory: `(train, test)` pairs.
pub fn mnist_paths(dir: &Path) -> [(PathBuf, PathBuf); 2] {
    [
        (dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte")),
        (dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte")),
    ]
}

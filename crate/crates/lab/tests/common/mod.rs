#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use normgen::config::{DatasetKind, DatasetSpec, ExperimentConfig, ProtocolKind};
use normgen_core::nn::{Architecture, SgdConfig};

pub fn idx_images(n: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let mut b = vec![0, 0, 8, 3];
    for d in [n, rows, cols] {
        b.extend_from_slice(&(d as u32).to_be_bytes());
    }
    b.extend_from_slice(pixels);
    b
}

pub fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut b = vec![0, 0, 8, 1];
    b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    b.extend_from_slice(labels);
    b
}

/// A learnable 28x28 ten-class set: class `k` lights up a bar at row `2k + 4`.
pub fn synthetic_digits(n: usize, offset: usize) -> (Vec<u8>, Vec<u8>) {
    let mut pixels = vec![0u8; n * 784];
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = (i + offset) % 10;
        labels.push(k as u8);
        let img = &mut pixels[i * 784..(i + 1) * 784];
        let row = 2 * k + 4;
        let start = 4 + (i * 7 + offset) % 6;
        for c in start..start + 14 {
            img[row * 28 + c] = 255;
            img[(row + 1) * 28 + c] = 128 + ((i * 31) % 120) as u8;
        }
        // sparse texture so examples are not identical
        img[(i * 37) % 784] = 200;
    }
    (pixels, labels)
}

/// Writes MNIST-named IDX files with synthetic digits into `dir`.
pub fn write_synthetic_mnist(dir: &Path, train: usize, test: usize) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    for (prefix, n, off) in [("train", train, 0), ("t10k", test, 3)] {
        let (px, lb) = synthetic_digits(n, off);
        fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), idx_images(n, 28, 28, &px)).unwrap();
        fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), idx_labels(&lb)).unwrap();
    }
    dir.to_path_buf()
}

/// A fast config over synthetic data; callers adjust the protocol fields.
pub fn tiny_config(data_dir: &Path, out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        name: "tiny".into(),
        architecture: Architecture::Mnist3x34,
        dataset: DatasetSpec {
            kind: DatasetKind::Mnist,
            dir: data_dir.to_path_buf(),
            subset_size: None,
            test_subset_size: None,
            subset_seed: 0,
        },
        protocol: ProtocolKind::InitStdSweep,
        sweep_values: vec![0.03, 0.05],
        pretrain_epochs: 1,
        train_epochs: 2,
        random_label_epochs: 2,
        reference_loss: 0.006,
        reference_band: 2.0,
        stop_below_reference: false,
        init_std: 0.05,
        random_label_point: false,
        optimizer: SgdConfig { learning_rate: 0.01, momentum: 0.9, batch_size: 32 },
        seed: 7,
        norm: "fro".into(),
        bound: Default::default(),
        histogram_bins: 10,
        workers: 1,
        output_dir: out.to_path_buf(),
    }
}

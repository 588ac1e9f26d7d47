//! Dataset ingestion: validates the raw files and writes a provenance manifest.

use std::fs;
use std::path::{Path, PathBuf};

use normgen_core::data::{subset, Standardizer};
use serde::{Deserialize, Serialize};

use crate::config::{DatasetKind, DatasetSpec};
use crate::error::{io_err, Result};
use crate::io::{digest_files, mnist_paths};
use crate::protocol::load_raw;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: DatasetKind,
    pub files: Vec<FileEntry>,
    pub source_digest: String,
    pub train_examples: usize,
    pub test_examples: usize,
    pub image_shape: [usize; 3],
    pub class_count: usize,
    pub subset_size: Option<usize>,
    pub subset_seed: u64,
    /// Per-channel statistics fitted on the (subset) training set.
    pub standardizer: Standardizer,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IngestOutcome {
    Written(PathBuf),
    UpToDate(PathBuf),
}

fn raw_files(spec: &DatasetSpec) -> Vec<PathBuf> {
    let d = &spec.dir;
    match spec.kind {
        DatasetKind::Mnist => mnist_paths(d).into_iter().flat_map(|(a, b)| [a, b]).collect(),
        DatasetKind::Cifar10 => (1..=5)
            .map(|i| d.join(format!("data_batch_{i}.bin")))
            .chain([d.join("test_batch.bin")])
            .collect(),
        DatasetKind::Cifar100 => vec![d.join("train.bin"), d.join("test.bin")],
    }
}

/// Loads and checks the raw files, then writes `manifest.json` into `out`
/// unless an identical manifest is already there.
pub fn ingest(spec: &DatasetSpec, out: &Path) -> Result<(Manifest, IngestOutcome)> {
    let (train, test) = load_raw(spec)?;
    let mut files = Vec::new();
    for p in raw_files(spec) {
        let meta = fs::metadata(&p).map_err(io_err(&p))?;
        files.push(FileEntry {
            name: p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            sha256: digest_files(&[&p])?,
            bytes: meta.len(),
        });
    }
    let fitted_on = match spec.subset_size {
        Some(n) => subset(&train, n, spec.subset_seed)?,
        None => train.clone(),
    };
    let manifest = Manifest {
        kind: spec.kind,
        files,
        source_digest: train.provenance().source_digest.clone(),
        train_examples: train.len(),
        test_examples: test.len(),
        image_shape: train.image_shape(),
        class_count: train.class_count(),
        subset_size: spec.subset_size,
        subset_seed: spec.subset_seed,
        standardizer: Standardizer::fit(&fitted_on),
    };
    let path = out.join(MANIFEST_FILE);
    if let Ok(text) = fs::read_to_string(&path) {
        if serde_json::from_str::<Manifest>(&text).ok().as_ref() == Some(&manifest) {
            return Ok((manifest, IngestOutcome::UpToDate(path)));
        }
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(io_err(&path))?;
    Ok((manifest, IngestOutcome::Written(path)))
}

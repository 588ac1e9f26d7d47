//! In-memory datasets and the pure label/feature transforms applied to them.

mod corrupt;
mod standardize;

pub use corrupt::{corrupt_labels, randomize_all_labels, selection_count, subset, CorruptionPlan};
pub use standardize::Standardizer;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Where a dataset came from and what has been done to it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    /// Digest of the source files (hex), or a synthetic tag.
    pub source_digest: String,
    /// Fraction of labels permuted by [`corrupt_labels`]; 0 when untouched.
    pub corruption_fraction: f64,
    pub corruption_seed: Option<u64>,
    /// Seed of [`randomize_all_labels`], when applied.
    pub random_label_seed: Option<u64>,
    /// `(size, seed)` of [`subset`], when applied.
    pub subset: Option<(usize, u64)>,
    pub standardizer_id: Option<String>,
}

/// Images `[N, C, H, W]` with integer labels in `[0, class_count)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Tensor<f32>,
    labels: Vec<usize>,
    class_count: usize,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(images: Tensor<f32>, labels: Vec<usize>, class_count: usize, provenance: Provenance) -> Result<Self> {
        let s = images.shape();
        if s.len() != 4 {
            return Err(Error::Shape(format!("images must be [N, C, H, W], got {s:?}")));
        }
        if s[0] == 0 {
            return Err(Error::Empty("dataset"));
        }
        if s[0] != labels.len() {
            return Err(Error::Shape(format!("{} images but {} labels", s[0], labels.len())));
        }
        if class_count == 0 {
            return Err(Error::InvalidArgument("class count must be positive".into()));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::LabelOutOfRange { label, class_count });
        }
        Ok(Self { images, labels, class_count, provenance })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Always false: construction rejects empty datasets.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn images(&self) -> &Tensor<f32> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Short identifier combining source digest and applied transforms.
    pub fn id(&self) -> String {
        let p = &self.provenance;
        let digest: String = p.source_digest.chars().take(12).collect();
        let mut id = format!("{digest}:n{}", self.len());
        if p.corruption_fraction > 0.0 {
            id += &format!(":corrupt{}@{}", p.corruption_fraction, p.corruption_seed.unwrap_or(0));
        }
        if let Some(seed) = p.random_label_seed {
            id += &format!(":randlabels@{seed}");
        }
        id
    }

    /// Same images with new labels.
    pub fn with_labels(&self, labels: Vec<usize>, provenance: Provenance) -> Result<Self> {
        Self::new(self.images.clone(), labels, self.class_count, provenance)
    }

    pub(crate) fn with_images(&self, images: Tensor<f32>, provenance: Provenance) -> Result<Self> {
        Self::new(images, self.labels.clone(), self.class_count, provenance)
    }

    /// Examples at `indices`, in that order.
    pub fn select(&self, indices: &[usize], provenance: Provenance) -> Result<Self> {
        let (images, labels) = self.batch::<f32>(indices)?;
        Self::new(images, labels, self.class_count, provenance)
    }

    /// Gathers `indices` into a `[len, C, H, W]` batch at precision `T`.
    pub fn batch<T: Real>(&self, indices: &[usize]) -> Result<(Tensor<T>, Vec<usize>)> {
        let [c, h, w] = self.image_shape();
        let stride = c * h * w;
        let mut data = Vec::with_capacity(indices.len() * stride);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidArgument(format!("index {i} out of range for {} examples", self.len())));
            }
            data.extend(self.images.data()[i * stride..(i + 1) * stride].iter().map(|&v| T::of_f64(v as f64)));
            labels.push(self.labels[i]);
        }
        Ok((Tensor::from_parts(alloc::vec![indices.len(), c, h, w], data)?, labels))
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use alloc::vec;

    /// `n` images of shape `[c, h, w]` with a deterministic pattern.
    pub fn synthetic(n: usize, c: usize, h: usize, w: usize, class_count: usize) -> Dataset {
        let data = (0..n * c * h * w).map(|i| ((i * 7919) % 255) as f32 / 255.0).collect();
        let labels = (0..n).map(|i| (i * 3 + 1) % class_count).collect();
        let prov = Provenance { source_digest: "synthetic".into(), ..Default::default() };
        Dataset::new(Tensor::new(vec![n, c, h, w], data).unwrap(), labels, class_count, prov).unwrap()
    }
}

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Smallest standard deviation used for scaling.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel affine standardization fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &Dataset) -> Self {
        let [c, h, w] = train.image_shape();
        let plane = h * w;
        let data = train.images().data();
        let count = (train.len() * plane) as f64;
        let mut mean = vec![0.0; c];
        let mut std = vec![0.0; c];
        for ch in 0..c {
            let planes = || (0..train.len()).flat_map(move |n| data[(n * c + ch) * plane..(n * c + ch + 1) * plane].iter());
            let m = planes().map(|&v| v as f64).sum::<f64>() / count;
            let var = planes().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / count;
            mean[ch] = m;
            std[ch] = Float::sqrt(var).max(STD_FLOOR);
        }
        Self { mean, std }
    }

    /// Deterministic identifier derived from the fitted statistics.
    pub fn id(&self) -> String {
        // FNV-1a over the bit patterns
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.mean.iter().chain(&self.std) {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        format!("std-c{}-{h:016x}", self.mean.len())
    }

    fn map(&self, ds: &Dataset, f: impl Fn(f64, f64, f64) -> f64, provenance: Provenance) -> Result<Dataset> {
        let [c, h, w] = ds.image_shape();
        if c != self.mean.len() {
            return Err(Error::Shape(format!("standardizer has {} channels, dataset {c}", self.mean.len())));
        }
        let plane = h * w;
        let data = ds
            .images()
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let ch = (i / plane) % c;
                f(v as f64, self.mean[ch], self.std[ch]) as f32
            })
            .collect();
        ds.with_images(Tensor::new(ds.images().shape().to_vec(), data)?, provenance)
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        let prov = Provenance { standardizer_id: Some(self.id()), ..ds.provenance().clone() };
        self.map(ds, |x, m, s| (x - m) / s, prov)
    }

    /// Inverse of [`Standardizer::apply`].
    pub fn invert(&self, ds: &Dataset) -> Result<Dataset> {
        let prov = Provenance { standardizer_id: None, ..ds.provenance().clone() };
        self.map(ds, |z, m, s| z * s + m, prov)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::synthetic;

    fn channel_stats(ds: &Dataset) -> Standardizer {
        Standardizer::fit(ds)
    }

    #[test]
    fn fit_then_apply_is_centered() {
        let train = synthetic(40, 3, 4, 4, 10);
        let s = Standardizer::fit(&train);
        let z = s.apply(&train).unwrap();
        let refit = channel_stats(&z);
        for ch in 0..3 {
            assert!(refit.mean[ch].abs() < 1e-5);
            assert!((refit.std[ch] - 1.0).abs() < 1e-5);
        }
        assert_eq!(z.provenance().standardizer_id.as_deref(), Some(s.id().as_str()));
    }

    #[test]
    fn constant_channel_hits_floor() {
        let imgs = Tensor::new(alloc::vec![3, 1, 2, 2], alloc::vec![0.5f32; 12]).unwrap();
        let ds = Dataset::new(imgs, alloc::vec![0, 1, 0], 2, Provenance::default()).unwrap();
        let s = Standardizer::fit(&ds);
        assert_eq!(s.std[0], STD_FLOOR);
        let z = s.apply(&ds).unwrap();
        assert!(z.images().data().iter().all(|v| v.is_finite() && *v == 0.0));
    }

    #[test]
    fn shifted_test_set_keeps_offset() {
        let train = synthetic(30, 1, 3, 3, 2);
        let s = Standardizer::fit(&train);
        let shifted: alloc::vec::Vec<f32> = train.images().data().iter().map(|v| v + 0.25).collect();
        let test = train
            .with_images(Tensor::new(train.images().shape().to_vec(), shifted).unwrap(), Provenance::default())
            .unwrap();
        let z = s.apply(&test).unwrap();
        let m = z.images().data().iter().map(|&v| v as f64).sum::<f64>() / z.images().len() as f64;
        assert!((m - 0.25 / s.std[0]).abs() < 1e-4);
    }

    #[test]
    fn invert_reconstructs() {
        let ds = synthetic(10, 3, 2, 2, 4);
        let s = Standardizer::fit(&ds);
        let back = s.invert(&s.apply(&ds).unwrap()).unwrap();
        for (a, b) in ds.images().data().iter().zip(back.images().data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::cross_entropy;
use super::network::{Mode, Network};
use crate::error::Result;
use crate::tensor::Tensor;

/// Settings for comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Bound on `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub tolerance: f64,
    /// Denominator floor so that vanishing gradients are compared absolutely.
    pub floor: f64,
    /// Coordinates sampled per trainable array; `None` checks all of them.
    pub coords_per_array: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: 1e-4, tolerance: 1e-4, floor: 1e-6, coords_per_array: Some(24), seed: 0 }
    }
}

/// One compared coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradSample {
    pub array: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates whose `±step` perturbation flips a ReLU; not differentiable there.
    pub skipped_kinks: usize,
    pub worst: Option<GradSample>,
    pub failures: usize,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.worst.map_or(0.0, |w| w.relative_error)
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checked > 0
    }
}

/// Central-difference check of every trainable array of a 64-bit network.
pub fn check_gradients(
    net: &Network<f64>,
    batch: &Tensor<f64>,
    labels: &[usize],
    mode: Mode,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let analytic = net.backward(batch, labels, mode)?.gradients;
    let base_pattern = net.activation_pattern(batch, mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut probe = net.clone();
    let mut report = GradCheckReport { checked: 0, skipped_kinks: 0, worst: None, failures: 0 };

    let sizes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    for (a, &len) in sizes.iter().enumerate() {
        let coords: Vec<usize> = match cfg.coords_per_array {
            Some(k) if k < len => index::sample(&mut rng, len, k).into_vec(),
            _ => (0..len).collect(),
        };
        for i in coords {
            let orig = probe.params()[a][i];
            let mut eval = |v: f64| -> Result<(f64, bool)> {
                probe.params_mut()[a][i] = v;
                let logits = probe.forward(batch, mode)?;
                let same = probe.activation_pattern(batch, mode)? == base_pattern;
                Ok((cross_entropy(&logits, labels)?, same))
            };
            let (up, same_up) = eval(orig + cfg.step)?;
            let (down, same_down) = eval(orig - cfg.step)?;
            probe.params_mut()[a][i] = orig;
            if !(same_up && same_down) {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * cfg.step);
            let an = analytic.arrays[a][i];
            let relative_error = (an - numeric).abs() / an.abs().max(numeric.abs()).max(cfg.floor);
            report.checked += 1;
            if relative_error > cfg.tolerance {
                report.failures += 1;
            }
            if report.worst.is_none_or(|w| relative_error > w.relative_error) {
                report.worst = Some(GradSample { array: a, index: i, analytic: an, numeric, relative_error });
            }
        }
    }
    Ok(report)
}

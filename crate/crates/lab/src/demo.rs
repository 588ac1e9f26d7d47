//! Min-norm gradient descent on a random underdetermined least-squares system.

use nalgebra::{DMatrix, DVector};
use normgen_core::analysis::{min_norm_gd, GdConfig, MinNormReport};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Serialize)]
pub struct DemoReport {
    pub examples: usize,
    pub dims: usize,
    pub seed: u64,
    pub gd: MinNormReport,
    /// Norm of the pseudoinverse solution.
    pub pinv_norm: f64,
    /// `|gd - pinv|`.
    pub distance_to_pinv: f64,
}

/// Gaussian `X` (`n x d`, `n < d`) and labels in {-1, +1}.
pub fn random_system(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> =
        (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let y = (0..n).map(|_| if rand::Rng::random_bool(&mut rng, 0.5) { 1.0 } else { -1.0 }).collect();
    (x, y)
}

pub fn demo_linear(n: usize, d: usize, seed: u64) -> Result<DemoReport> {
    if n == 0 || n >= d {
        return Err(LabError::Invalid(format!("need 0 < examples < dims, got {n} and {d}")));
    }
    let (x, y) = random_system(n, d, seed);
    let gd = min_norm_gd(&x, &y, &GdConfig::default())?;
    let m = DMatrix::from_fn(n, d, |i, j| x[i][j]);
    let pinv = m.pseudo_inverse(1e-12).map_err(|e| LabError::Invalid(e.to_string()))?;
    let w = pinv * DVector::from_vec(y);
    let distance_to_pinv = (DVector::from_vec(gd.weights.clone()) - &w).norm();
    Ok(DemoReport { examples: n, dims: d, seed, pinv_norm: w.norm(), distance_to_pinv, gd })
}

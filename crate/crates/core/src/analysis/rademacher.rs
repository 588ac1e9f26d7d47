use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Monte Carlo estimate of the empirical Rademacher complexity of the linear
/// class `{x -> <w, x> : ||w||_2 <= W}` on a fixed sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub estimate: f64,
    /// Standard error of the mean over trials (0 for a single trial).
    pub std_error: f64,
    pub trials: usize,
    pub n: usize,
    /// Largest Euclidean norm of a sample vector.
    pub x_bound: f64,
    pub w_bound: f64,
    /// `x_bound * w_bound / sqrt(n)`, an upper bound on the expectation.
    pub ceiling: f64,
}

/// Each sign draw uses the exact supremum `(W / N) * ||sum sigma_i x_i||`.
pub fn rademacher_linear(data: &[Vec<f64>], w_bound: f64, trials: usize, seed: u64) -> Result<RademacherEstimate> {
    let n = data.len();
    if n == 0 {
        return Err(Error::Empty("rademacher sample"));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    if !(w_bound >= 0.0 && w_bound.is_finite()) {
        return Err(Error::InvalidArgument(format!("weight bound must be finite and >= 0, got {w_bound}")));
    }
    let d = data[0].len();
    if data.iter().any(|x| x.len() != d) {
        return Err(Error::Shape("sample vectors differ in length".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![0.0; d];
    let mut values = Vec::with_capacity(trials);
    for _ in 0..trials {
        sum.iter_mut().for_each(|s| *s = 0.0);
        for x in data {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            sum.iter_mut().zip(x).for_each(|(s, v)| *s += sign * v);
        }
        let norm = Float::sqrt(sum.iter().map(|v| v * v).sum::<f64>());
        values.push(w_bound * norm / n as f64);
    }
    let t = trials as f64;
    let estimate = values.iter().sum::<f64>() / t;
    let std_error = if trials > 1 {
        let var = values.iter().map(|v| (v - estimate) * (v - estimate)).sum::<f64>() / (t - 1.0);
        Float::sqrt(var / t)
    } else {
        0.0
    };
    let x_bound = data.iter().map(|x| Float::sqrt(x.iter().map(|v| v * v).sum::<f64>())).fold(0.0, f64::max);
    let ceiling = x_bound * w_bound / Float::sqrt(n as f64);
    Ok(RademacherEstimate { estimate, std_error, trials, n, x_bound, w_bound, ceiling })
}

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use crate::error::{Error, Result};
use crate::real::Real;

/// SGD hyperparameters. Defaults: lr 0.01, momentum 0.9, batch 64.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, momentum: 0.9, batch_size: 64 }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Heavy-ball SGD state: `v <- momentum * v + g`, `w <- w - lr * v`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub config: SgdConfig,
    /// Seed for minibatch ordering.
    pub seed: u64,
    /// Completed epochs.
    pub epoch: usize,
    velocity: Vec<Vec<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(config: SgdConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, seed, epoch: 0, velocity: Vec::new() })
    }

    pub fn velocity(&self) -> &[Vec<T>] {
        &self.velocity
    }
}

/// Applies one update in place.
pub fn sgd_step<T: Real>(net: &mut Network<T>, grads: &Gradients<T>, state: &mut OptimizerState<T>) -> Result<()> {
    let mut params = net.params_mut();
    if params.len() != grads.arrays.len() {
        return Err(Error::Shape(format!("{} gradient arrays for {} parameters", grads.arrays.len(), params.len())));
    }
    for (p, g) in params.iter().zip(&grads.arrays) {
        if p.len() != g.len() {
            return Err(Error::Shape(format!("gradient of length {} for parameter of length {}", g.len(), p.len())));
        }
    }
    if state.velocity.len() != params.len() {
        state.velocity = params.iter().map(|p| alloc::vec![T::zero(); p.len()]).collect();
    }
    let lr = T::of_f64(state.config.learning_rate);
    let mu = T::of_f64(state.config.momentum);
    for ((p, g), v) in params.iter_mut().zip(&grads.arrays).zip(&mut state.velocity) {
        for ((w, &gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
            *vi = mu * *vi + gi;
            *w -= lr * *vi;
        }
    }
    Ok(())
}

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{Mode, Network};
use super::optim::{sgd_step, OptimizerState};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSummary {
    /// 1-based index of the epoch just completed.
    pub epoch: usize,
    /// Mean of the minibatch losses seen during the epoch (train mode).
    pub mean_batch_loss: f64,
    pub batches: usize,
}

/// One forward/backward/update on a minibatch. Returns the batch loss.
pub fn train_step<T: Real>(
    net: &mut Network<T>,
    batch: &Tensor<T>,
    labels: &[usize],
    state: &mut OptimizerState<T>,
) -> Result<f64> {
    let out = net.backward(batch, labels, Mode::Train)?;
    if !out.loss.is_finite() {
        return Err(Error::Diverged(format!("minibatch loss {}", out.loss)));
    }
    net.update_running_stats(&out.batch_stats);
    sgd_step(net, &out.gradients, state)?;
    Ok(out.loss)
}

/// Example order for `epoch`, a pure function of `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// One pass over `data` in minibatches; the final short batch is kept.
pub fn train_epoch<T: Real>(net: &mut Network<T>, data: &Dataset, state: &mut OptimizerState<T>) -> Result<EpochSummary> {
    let order = epoch_order(data.len(), state.seed, state.epoch);
    let mut total = 0.0;
    let mut batches = 0;
    for idx in order.chunks(state.config.batch_size) {
        let (x, y) = data.batch::<T>(idx)?;
        let loss = train_step(net, &x, &y, state).map_err(|e| match e {
            Error::NonFinite(what) => Error::Diverged(what),
            other => other,
        })?;
        total += loss;
        batches += 1;
    }
    state.epoch += 1;
    Ok(EpochSummary { epoch: state.epoch, mean_batch_loss: total / batches as f64, batches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::synthetic;
    use crate::nn::arch::{build_architecture, Architecture};
    use crate::nn::init::init_gaussian;
    use crate::nn::optim::SgdConfig;

    #[test]
    fn order_is_permutation_and_varies_by_epoch() {
        let a = epoch_order(50, 3, 0);
        let mut s = a.clone();
        s.sort_unstable();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
        assert_ne!(a, epoch_order(50, 3, 1));
        assert_eq!(a, epoch_order(50, 3, 0));
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let data = synthetic(24, 1, 28, 28, 10);
        let run = || {
            let mut net = build_architecture::<f32>(Architecture::Mnist3x34, 10).unwrap();
            init_gaussian(&mut net, 0.02, 5).unwrap();
            let mut st = OptimizerState::new(SgdConfig { batch_size: 8, ..Default::default() }, 9).unwrap();
            let s = train_epoch(&mut net, &data, &mut st).unwrap();
            (net, s)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert_eq!(sa.batches, 3);
    }
}

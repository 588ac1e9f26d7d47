use alloc::format;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layer::Layer;
use super::network::Network;
use crate::error::{Error, Result};
use crate::real::Real;

/// Redraws every conv/dense weight i.i.d. from `N(0, std^2)`; biases are zeroed
/// and batch norm is reset to the identity. Samples are drawn in 64-bit so a
/// given seed yields the same weights at either precision.
pub fn init_gaussian<T: Real>(net: &mut Network<T>, std: f64, seed: u64) -> Result<()> {
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::InvalidArgument(format!("init std must be finite and >= 0, got {std}")));
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(format!("{e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in net.layers_mut() {
        match layer {
            Layer::Conv(_) | Layer::Dense(_) => {
                let (w, b) = layer.weight_and_bias_mut().expect("parametric layer");
                w.iter_mut().for_each(|v| *v = T::of_f64(normal.sample(&mut rng)));
                if let Some(b) = b {
                    b.iter_mut().for_each(|v| *v = T::zero());
                }
            }
            Layer::BatchNorm(bn) => {
                bn.gamma.iter_mut().for_each(|v| *v = T::one());
                bn.beta.iter_mut().for_each(|v| *v = T::zero());
                bn.running_mean.iter_mut().for_each(|v| *v = T::zero());
                bn.running_var.iter_mut().for_each(|v| *v = T::one());
            }
            Layer::Relu => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::arch::{build_architecture, Architecture};

    #[test]
    fn deterministic_per_seed() {
        let mut a = build_architecture::<f32>(Architecture::Mnist3x34, 10).unwrap();
        let mut b = a.clone();
        init_gaussian(&mut a, 0.05, 7).unwrap();
        init_gaussian(&mut b, 0.05, 7).unwrap();
        assert_eq!(a, b);
        init_gaussian(&mut b, 0.05, 8).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn empirical_std_and_zero_bias() {
        let mut net = build_architecture::<f64>(Architecture::Mnist3x34, 10).unwrap();
        init_gaussian(&mut net, 0.05, 3).unwrap();
        let params = net.params();
        // conv weight, conv bias, conv weight, dense weight
        assert!(params[1].iter().all(|&b| b == 0.0));
        let w: alloc::vec::Vec<f64> = params[3].to_vec();
        assert!(w.len() >= 10_000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
        assert!((var.sqrt() / 0.05 - 1.0).abs() < 0.05);
    }

    #[test]
    fn rejects_bad_std() {
        let mut net = build_architecture::<f32>(Architecture::Mnist3x34, 10).unwrap();
        assert!(init_gaussian(&mut net, -1.0, 0).is_err());
        assert!(init_gaussian(&mut net, f64::NAN, 0).is_err());
    }
}

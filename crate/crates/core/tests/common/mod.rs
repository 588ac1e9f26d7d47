#![allow(dead_code)]

use normgen_core::nn::{init_gaussian, Layer, LayerSpec, Network};
use normgen_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(n: usize, std: f64, seed: u64) -> Vec<f64> {
    let d = Normal::new(0.0, std).unwrap();
    let mut r = rng(seed);
    (0..n).map(|_| d.sample(&mut r)).collect()
}

pub fn batch(n: usize, shape: [usize; 3], seed: u64) -> Tensor<f64> {
    Tensor::new(vec![n, shape[0], shape[1], shape[2]], gaussian(n * shape.iter().product::<usize>(), 1.0, seed)).unwrap()
}

pub fn labels(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random_range(0..k)).collect()
}

/// Gaussian weights plus nonzero biases and batch-norm parameters.
pub fn random_net(
    specs: &[LayerSpec],
    input: [usize; 3],
    k: usize,
    std: f64,
    seed: u64,
) -> Network<f64> {
    let mut net = Network::<f64>::from_specs("test", input, k, specs).unwrap();
    init_gaussian(&mut net, std, seed).unwrap();
    let mut r = rng(seed ^ 0x9e37_79b9);
    let u = Uniform::new(-0.3, 0.3).unwrap();
    for layer in net.layers_mut() {
        match layer {
            Layer::Conv(c) => c.bias.iter_mut().flatten().for_each(|b| *b = u.sample(&mut r)),
            Layer::Dense(d) => d.bias.iter_mut().flatten().for_each(|b| *b = u.sample(&mut r)),
            Layer::BatchNorm(bn) => {
                for ch in 0..bn.channels {
                    bn.gamma[ch] = r.random_range(0.5..1.5);
                    bn.beta[ch] = u.sample(&mut r);
                    bn.running_mean[ch] = u.sample(&mut r);
                    bn.running_var[ch] = r.random_range(0.5..2.0);
                }
            }
            Layer::Relu => {}
        }
    }
    net
}

/// Small stacks covering each layer kind; `(specs, input shape, classes)`.
pub fn dense_stack() -> (Vec<LayerSpec>, [usize; 3], usize) {
    (
        vec![
            LayerSpec::Dense { inputs: 6, outputs: 5, bias: true },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: 5, outputs: 3, bias: true },
        ],
        [6, 1, 1],
        3,
    )
}

pub fn conv_stack() -> (Vec<LayerSpec>, [usize; 3], usize) {
    (
        vec![
            LayerSpec::Conv { in_channels: 2, filters: 3, kernel_h: 3, kernel_w: 3, stride: 1, bias: true },
            LayerSpec::Relu,
            LayerSpec::Conv { in_channels: 3, filters: 4, kernel_h: 2, kernel_w: 3, stride: 2, bias: false },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: 4 * 2 * 2, outputs: 4, bias: false },
        ],
        [2, 6, 7],
        4,
    )
}

pub fn bn_stack() -> (Vec<LayerSpec>, [usize; 3], usize) {
    (
        vec![
            LayerSpec::Conv { in_channels: 2, filters: 3, kernel_h: 3, kernel_w: 3, stride: 2, bias: false },
            LayerSpec::BatchNorm { channels: 3, eps: 1e-5 },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: 3 * 3 * 3, outputs: 3, bias: true },
        ],
        [2, 7, 7],
        3,
    )
}

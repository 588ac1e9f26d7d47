mod common;

use common::*;
use normgen_core::nn::{check_gradients, GradCheckConfig, LayerSpec, Mode, Network};
use normgen_core::Tensor;

fn check_stack(stack: (Vec<LayerSpec>, [usize; 3], usize), mode: Mode, instances: u64) {
    let (specs, input, k) = stack;
    let (mut checked, mut skipped) = (0, 0);
    for seed in 0..instances {
        let net = random_net(&specs, input, k, 0.5, seed);
        let x = batch(8, input, 1000 + seed);
        let y = labels(8, k, 2000 + seed);
        let cfg = GradCheckConfig { seed, ..GradCheckConfig::default() };
        let r = check_gradients(&net, &x, &y, mode, &cfg).unwrap();
        assert!(r.passed(), "seed {seed}: {r:?}");
        checked += r.checked;
        skipped += r.skipped_kinks;
    }
    // a perturbation that flips a ReLU measures no derivative; most coordinates must be smooth
    assert!(skipped * 5 < checked + skipped, "{skipped} of {} coordinates straddle a kink", checked + skipped);
}

#[test]
fn dense_and_relu_layers() {
    check_stack(dense_stack(), Mode::Train, 20);
}

#[test]
fn conv_layers() {
    check_stack(conv_stack(), Mode::Train, 20);
}

#[test]
fn batchnorm_with_batch_statistics() {
    check_stack(bn_stack(), Mode::Train, 20);
}

#[test]
fn batchnorm_with_running_statistics() {
    check_stack(bn_stack(), Mode::Eval, 20);
}

#[test]
fn dense_weight_gradient_by_hand() {
    // logits z = W x, x = [1, 2], W = 0: softmax is uniform, dz = p - onehot(0) = [-0.5, 0.5]
    // dW = dz^T x = [[-0.5, -1.0], [0.5, 1.0]]
    let net = Network::<f64>::from_specs("d", [2, 1, 1], 2, &[LayerSpec::Dense { inputs: 2, outputs: 2, bias: false }])
        .unwrap();
    let x = Tensor::new(vec![1, 2, 1, 1], vec![1.0, 2.0]).unwrap();
    let out = net.backward(&x, &[0], Mode::Train).unwrap();
    assert_eq!(out.gradients.arrays[0], vec![-0.5, -1.0, 0.5, 1.0]);
    assert!((out.loss - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn relu_passes_positive_and_blocks_negative() {
    // first layer weights make hidden = [x, -x]; second layer sums them
    let specs = [
        LayerSpec::Dense { inputs: 1, outputs: 2, bias: false },
        LayerSpec::Relu,
        LayerSpec::Dense { inputs: 2, outputs: 2, bias: false },
    ];
    let mut net = Network::<f64>::from_specs("r", [1, 1, 1], 2, &specs).unwrap();
    net.layers_mut()[0].weight_and_bias_mut().unwrap().0.copy_from_slice(&[1.0, -1.0]);
    net.layers_mut()[2].weight_and_bias_mut().unwrap().0.copy_from_slice(&[1.0, 1.0, 0.0, 0.0]);
    let x = Tensor::new(vec![1, 1, 1, 1], vec![2.0]).unwrap();
    let g = net.backward(&x, &[1], Mode::Train).unwrap().gradients;
    // unit 0 is active (pre-activation 2), unit 1 is blocked (pre-activation -2)
    assert!(g.arrays[0][0] != 0.0);
    assert_eq!(g.arrays[0][1], 0.0);
    assert_eq!(g.arrays[1][1], 0.0);
    assert_eq!(g.arrays[1][3], 0.0);
}

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use super::layer::{relu_backward, relu_forward, BnCache, Layer, LayerSpec, BN_MOMENTUM};
use super::loss::softmax_cross_entropy_with_grad;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Batch-norm behaviour during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics.
    Train,
    /// Running statistics.
    Eval,
}

/// A feed-forward stack of conv / dense / ReLU / batch-norm layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    arch: String,
    input_shape: [usize; 3],
    class_count: usize,
    layers: Vec<Layer<T>>,
}

/// One gradient array per trainable array, in [`Network::params`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub arrays: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn ensure_finite(&self) -> Result<()> {
        for (i, a) in self.arrays.iter().enumerate() {
            if let Some(j) = a.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient array {i}, element {j}")));
            }
        }
        Ok(())
    }

    pub fn l2_norm(&self) -> f64 {
        let ss: f64 = self.arrays.iter().flatten().map(|v| v.as_f64().powi(2)).sum();
        Float::sqrt(ss)
    }
}

/// Per-channel statistics of one batch-norm layer for one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub layer: usize,
    pub mean: Vec<f64>,
    /// Unbiased variance.
    pub var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BackwardOutput<T> {
    /// Mean cross-entropy of the batch.
    pub loss: f64,
    pub logits: Tensor<T>,
    pub gradients: Gradients<T>,
    /// Filled in train mode only.
    pub batch_stats: Vec<BatchStats>,
}

enum Saved<T> {
    Input(Tensor<T>),
    Bn(BnCache<T>),
}

impl<T: Real> Network<T> {
    /// Validates that layer dimensions chain from `input_shape` to `class_count` logits.
    pub fn new(arch: impl Into<String>, input_shape: [usize; 3], class_count: usize, layers: Vec<Layer<T>>) -> Result<Self> {
        let net = Self { arch: arch.into(), input_shape, class_count, layers };
        net.validate()?;
        Ok(net)
    }

    /// Network with zero weights from a list of layer specs.
    pub fn from_specs(arch: impl Into<String>, input_shape: [usize; 3], class_count: usize, specs: &[LayerSpec]) -> Result<Self> {
        Self::new(arch, input_shape, class_count, specs.iter().map(Layer::from_spec).collect())
    }

    fn validate(&self) -> Result<()> {
        if self.class_count == 0 {
            return Err(Error::InvalidArgument("class count must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Empty("network layers"));
        }
        let out = self.output_shape()?;
        if out[0] * out[1] * out[2] != self.class_count {
            return Err(Error::Shape(format!(
                "network emits {:?} but has {} classes",
                out, self.class_count
            )));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let ok = match layer {
                Layer::Conv(c) => {
                    c.weight.len() == c.filters * c.in_channels * c.kernel_h * c.kernel_w
                        && c.bias.as_ref().map_or(true, |b| b.len() == c.filters)
                }
                Layer::Dense(d) => {
                    d.weight.len() == d.inputs * d.outputs && d.bias.as_ref().map_or(true, |b| b.len() == d.outputs)
                }
                Layer::BatchNorm(b) => [&b.gamma, &b.beta, &b.running_mean, &b.running_var]
                    .iter()
                    .all(|v| v.len() == b.channels),
                Layer::Relu => true,
            };
            if !ok {
                return Err(Error::Shape(format!("layer {i} parameter arrays do not match its spec")));
            }
        }
        Ok(())
    }

    fn output_shape(&self) -> Result<[usize; 3]> {
        self.layers.iter().try_fold(self.input_shape, |s, l| l.spec().output_shape(s))
    }

    /// Activation shape after every layer.
    pub fn activation_shapes(&self) -> Vec<[usize; 3]> {
        let mut s = self.input_shape;
        self.layers
            .iter()
            .map(|l| {
                s = l.spec().output_shape(s).expect("validated network");
                s
            })
            .collect()
    }

    pub fn arch(&self) -> &str {
        &self.arch
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Mutable access to layer parameters. Callers must keep array lengths intact.
    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Replaces the layer stack, re-validating the dimension chain.
    pub fn with_layers(&self, layers: Vec<Layer<T>>) -> Result<Self> {
        Self::new(self.arch.clone(), self.input_shape, self.class_count, layers)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn has_batchnorm(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::BatchNorm(_)))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.spec().param_count()).sum()
    }

    /// Trainable arrays in declaration order: conv/dense weight then bias,
    /// batch-norm gamma then beta.
    pub fn params(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(&c.weight[..]);
                    if let Some(b) = &c.bias {
                        out.push(&b[..]);
                    }
                }
                Layer::Dense(d) => {
                    out.push(&d.weight[..]);
                    if let Some(b) = &d.bias {
                        out.push(&b[..]);
                    }
                }
                Layer::BatchNorm(b) => {
                    out.push(&b.gamma[..]);
                    out.push(&b.beta[..]);
                }
                Layer::Relu => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(&mut c.weight[..]);
                    if let Some(b) = &mut c.bias {
                        out.push(&mut b[..]);
                    }
                }
                Layer::Dense(d) => {
                    out.push(&mut d.weight[..]);
                    if let Some(b) = &mut d.bias {
                        out.push(&mut b[..]);
                    }
                }
                Layer::BatchNorm(b) => {
                    out.push(&mut b.gamma[..]);
                    out.push(&mut b.beta[..]);
                }
                Layer::Relu => {}
            }
        }
        out
    }

    /// Every persisted array (trainable plus batch-norm running statistics),
    /// in per-layer declaration order.
    pub fn state_arrays(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(&c.weight[..]);
                    if let Some(b) = &c.bias {
                        out.push(&b[..]);
                    }
                }
                Layer::Dense(d) => {
                    out.push(&d.weight[..]);
                    if let Some(b) = &d.bias {
                        out.push(&b[..]);
                    }
                }
                Layer::BatchNorm(b) => {
                    out.extend([&b.gamma[..], &b.beta[..], &b.running_mean[..], &b.running_var[..]]);
                }
                Layer::Relu => {}
            }
        }
        out
    }

    pub fn state_arrays_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(&mut c.weight[..]);
                    if let Some(b) = &mut c.bias {
                        out.push(&mut b[..]);
                    }
                }
                Layer::Dense(d) => {
                    out.push(&mut d.weight[..]);
                    if let Some(b) = &mut d.bias {
                        out.push(&mut b[..]);
                    }
                }
                Layer::BatchNorm(b) => {
                    out.push(&mut b.gamma[..]);
                    out.push(&mut b.beta[..]);
                    out.push(&mut b.running_mean[..]);
                    out.push(&mut b.running_var[..]);
                }
                Layer::Relu => {}
            }
        }
        out
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            arch: self.arch.clone(),
            input_shape: self.input_shape,
            class_count: self.class_count,
            layers: self.layers.iter().map(Layer::cast).collect(),
        }
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<usize> {
        let s = batch.shape();
        if s.len() != 4 || s[1..] != self.input_shape {
            return Err(Error::Shape(format!(
                "batch shape {:?} does not match input [N, {}, {}, {}]",
                s, self.input_shape[0], self.input_shape[1], self.input_shape[2]
            )));
        }
        if s[0] == 0 {
            return Err(Error::Empty("batch"));
        }
        Ok(s[0])
    }

    fn run(&self, batch: &Tensor<T>, mode: Mode, keep: bool) -> Result<(Tensor<T>, Vec<Saved<T>>)> {
        let n = self.check_batch(batch)?;
        let mut saved = Vec::with_capacity(if keep { self.layers.len() } else { 0 });
        let mut x = batch.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let y = match layer {
                Layer::Conv(c) => c.forward(&x),
                Layer::Dense(d) => d.forward(&x),
                Layer::Relu => relu_forward(&x),
                Layer::BatchNorm(b) => {
                    let (y, cache) = b.forward(&x, mode == Mode::Train);
                    if keep {
                        saved.push(Saved::Bn(cache));
                    }
                    y.ensure_finite(&format!("activation of layer {i}"))?;
                    x = y;
                    continue;
                }
            };
            if keep {
                saved.push(Saved::Input(x));
            }
            x = y;
        }
        x.ensure_finite("logits")?;
        let logits = x.reshape(vec![n, self.class_count])?;
        Ok((logits, saved))
    }

    /// Logits `[batch, class_count]`.
    pub fn forward(&self, batch: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.run(batch, mode, false).map(|(l, _)| l)
    }

    /// Sign pattern of every ReLU input (`true` where strictly positive).
    pub fn activation_pattern(&self, batch: &Tensor<T>, mode: Mode) -> Result<Vec<bool>> {
        let (_, saved) = self.run(batch, mode, true)?;
        let mut pattern = Vec::new();
        for (layer, s) in self.layers.iter().zip(&saved) {
            if let (Layer::Relu, Saved::Input(x)) = (layer, s) {
                pattern.extend(x.data().iter().map(|&v| v > T::zero()));
            }
        }
        Ok(pattern)
    }

    /// Gradients of the minibatch-mean cross-entropy for every trainable array.
    pub fn backward(&self, batch: &Tensor<T>, labels: &[usize], mode: Mode) -> Result<BackwardOutput<T>> {
        let n = self.check_batch(batch)?;
        if labels.len() != n {
            return Err(Error::Shape(format!("{} labels for a batch of {n}", labels.len())));
        }
        let (logits, saved) = self.run(batch, mode, true)?;
        let (loss, dlogits) = softmax_cross_entropy_with_grad(&logits, labels)?;
        let shapes = self.activation_shapes();
        let [c, h, w] = shapes[shapes.len() - 1];
        let mut dy = dlogits.reshape(vec![n, c, h, w])?;

        let mut grads: Vec<Vec<Vec<T>>> = vec![Vec::new(); self.layers.len()];
        let mut batch_stats = Vec::new();
        for (i, (layer, s)) in self.layers.iter().zip(saved).enumerate().rev() {
            let need_dx = i > 0;
            match (layer, s) {
                (Layer::Conv(conv), Saved::Input(x)) => {
                    let (dw, db, dx) = conv.backward(&x, &dy, need_dx);
                    grads[i].push(dw);
                    grads[i].extend(db);
                    if let Some(dx) = dx {
                        dy = dx;
                    }
                }
                (Layer::Dense(dense), Saved::Input(x)) => {
                    let (dw, db, dx) = dense.backward(&x, &dy, need_dx);
                    grads[i].push(dw);
                    grads[i].extend(db);
                    if let Some(dx) = dx {
                        dy = dx;
                    }
                }
                (Layer::Relu, Saved::Input(x)) => {
                    dy = relu_backward(&x, &dy);
                }
                (Layer::BatchNorm(bn), Saved::Bn(cache)) => {
                    let (dg, dbeta, dx) = bn.backward(&cache, &dy);
                    grads[i].push(dg);
                    grads[i].push(dbeta);
                    if cache.batch_stats {
                        let m = cache.count as f64;
                        let correction = if cache.count > 1 { m / (m - 1.0) } else { 1.0 };
                        batch_stats.push(BatchStats {
                            layer: i,
                            mean: cache.mean.clone(),
                            var: cache.var.iter().map(|v| v * correction).collect(),
                        });
                    }
                    dy = dx;
                }
                _ => unreachable!("saved state always matches its layer"),
            }
        }
        batch_stats.reverse();
        let gradients = Gradients { arrays: grads.into_iter().flatten().collect() };
        gradients.ensure_finite()?;
        Ok(BackwardOutput { loss, logits, gradients, batch_stats })
    }

    /// Folds one minibatch's statistics into the running mean and variance.
    pub fn update_running_stats(&mut self, stats: &[BatchStats]) {
        for s in stats {
            if let Some(Layer::BatchNorm(bn)) = self.layers.get_mut(s.layer) {
                for ch in 0..bn.channels {
                    let rm = bn.running_mean[ch].as_f64();
                    let rv = bn.running_var[ch].as_f64();
                    bn.running_mean[ch] = T::of_f64((1.0 - BN_MOMENTUM) * rm + BN_MOMENTUM * s.mean[ch]);
                    bn.running_var[ch] = T::of_f64((1.0 - BN_MOMENTUM) * rv + BN_MOMENTUM * s.var[ch]);
                }
            }
        }
    }
}

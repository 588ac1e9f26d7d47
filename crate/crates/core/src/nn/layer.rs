use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::conv::{valid_extent, ConvGeometry};
use crate::error::{Error, Result};
use crate::real::{MatMut, MatRef, Real};
use crate::tensor::Tensor;

/// Default batch-norm epsilon.
pub const BN_EPS: f64 = 1e-5;
/// Weight of the current batch in the running-statistics update.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Dense,
    Relu,
    BatchNorm,
}

/// Parameter-free description of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv {
        in_channels: usize,
        filters: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        bias: bool,
    },
    Dense {
        inputs: usize,
        outputs: usize,
        bias: bool,
    },
    Relu,
    #[serde(rename = "batchnorm")]
    BatchNorm { channels: usize, eps: f64 },
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Conv { .. } => LayerKind::Conv,
            LayerSpec::Dense { .. } => LayerKind::Dense,
            LayerSpec::Relu => LayerKind::Relu,
            LayerSpec::BatchNorm { .. } => LayerKind::BatchNorm,
        }
    }

    pub fn has_bias(&self) -> bool {
        matches!(self, LayerSpec::Conv { bias: true, .. } | LayerSpec::Dense { bias: true, .. })
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv { in_channels, kernel_h, kernel_w, .. } => in_channels * kernel_h * kernel_w,
            LayerSpec::Dense { inputs, .. } => inputs,
            _ => 0,
        }
    }

    pub fn fan_out(&self) -> usize {
        match *self {
            LayerSpec::Conv { filters, kernel_h, kernel_w, .. } => filters * kernel_h * kernel_w,
            LayerSpec::Dense { outputs, .. } => outputs,
            _ => 0,
        }
    }

    /// Trainable scalars held by this layer.
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv { in_channels, filters, kernel_h, kernel_w, bias, .. } => {
                filters * in_channels * kernel_h * kernel_w + if bias { filters } else { 0 }
            }
            LayerSpec::Dense { inputs, outputs, bias } => inputs * outputs + if bias { outputs } else { 0 },
            LayerSpec::Relu => 0,
            LayerSpec::BatchNorm { channels, .. } => 2 * channels,
        }
    }

    /// Activation shape `[c, h, w]` produced from `input`.
    pub fn output_shape(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let [c, h, w] = input;
        match *self {
            LayerSpec::Conv { in_channels, filters, kernel_h, kernel_w, stride, .. } => {
                if kernel_h == 0 || kernel_w == 0 || stride == 0 || filters == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "conv needs kernel >= 1, stride >= 1, filters >= 1: {self:?}"
                    )));
                }
                if c != in_channels {
                    return Err(Error::Shape(format!("conv expects {in_channels} channels, got {c}")));
                }
                let oh = valid_extent(h, kernel_h, stride);
                let ow = valid_extent(w, kernel_w, stride);
                match (oh, ow) {
                    (Some(oh), Some(ow)) => Ok([filters, oh, ow]),
                    _ => Err(Error::Shape(format!("{kernel_h}x{kernel_w} kernel does not fit {h}x{w} input"))),
                }
            }
            LayerSpec::Dense { inputs, outputs, .. } => {
                if inputs != c * h * w {
                    return Err(Error::Shape(format!("dense expects {inputs} inputs, got {}", c * h * w)));
                }
                if outputs == 0 {
                    return Err(Error::InvalidArgument(format!("dense layer with zero outputs")));
                }
                Ok([outputs, 1, 1])
            }
            LayerSpec::Relu => Ok(input),
            LayerSpec::BatchNorm { channels, eps } => {
                if channels != c {
                    return Err(Error::Shape(format!("batch norm expects {channels} channels, got {c}")));
                }
                if !(eps >= 0.0) {
                    return Err(Error::InvalidArgument(format!("batch norm eps {eps} is negative")));
                }
                Ok(input)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub filters: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    /// `[filters, in_channels, kernel_h, kernel_w]`, row-major.
    pub weight: Vec<T>,
    pub bias: Option<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[outputs, inputs]`, row-major.
    pub weight: Vec<T>,
    pub bias: Option<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d<T> {
    pub channels: usize,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    Dense(Dense<T>),
    Relu,
    BatchNorm(BatchNorm2d<T>),
}

impl<T: Real> Layer<T> {
    /// Zero weights; batch norm starts as the identity (gamma 1, variance 1).
    pub fn from_spec(spec: &LayerSpec) -> Self {
        match *spec {
            LayerSpec::Conv { in_channels, filters, kernel_h, kernel_w, stride, bias } => Layer::Conv(Conv2d {
                in_channels,
                filters,
                kernel_h,
                kernel_w,
                stride,
                weight: vec![T::zero(); filters * in_channels * kernel_h * kernel_w],
                bias: bias.then(|| vec![T::zero(); filters]),
            }),
            LayerSpec::Dense { inputs, outputs, bias } => Layer::Dense(Dense {
                inputs,
                outputs,
                weight: vec![T::zero(); inputs * outputs],
                bias: bias.then(|| vec![T::zero(); outputs]),
            }),
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::BatchNorm { channels, eps } => Layer::BatchNorm(BatchNorm2d {
                channels,
                gamma: vec![T::one(); channels],
                beta: vec![T::zero(); channels],
                running_mean: vec![T::zero(); channels],
                running_var: vec![T::one(); channels],
                eps,
            }),
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv(c) => LayerSpec::Conv {
                in_channels: c.in_channels,
                filters: c.filters,
                kernel_h: c.kernel_h,
                kernel_w: c.kernel_w,
                stride: c.stride,
                bias: c.bias.is_some(),
            },
            Layer::Dense(d) => LayerSpec::Dense { inputs: d.inputs, outputs: d.outputs, bias: d.bias.is_some() },
            Layer::Relu => LayerSpec::Relu,
            Layer::BatchNorm(b) => LayerSpec::BatchNorm { channels: b.channels, eps: b.eps },
        }
    }

    /// Weight block and bias of a conv or dense layer.
    pub fn weight_and_bias(&self) -> Option<(&[T], Option<&[T]>)> {
        match self {
            Layer::Conv(c) => Some((&c.weight, c.bias.as_deref())),
            Layer::Dense(d) => Some((&d.weight, d.bias.as_deref())),
            _ => None,
        }
    }

    pub fn weight_and_bias_mut(&mut self) -> Option<(&mut Vec<T>, &mut Option<Vec<T>>)> {
        match self {
            Layer::Conv(c) => Some((&mut c.weight, &mut c.bias)),
            Layer::Dense(d) => Some((&mut d.weight, &mut d.bias)),
            _ => None,
        }
    }

    pub fn cast<U: Real>(&self) -> Layer<U> {
        fn cv<A: Real, B: Real>(v: &[A]) -> Vec<B> {
            v.iter().map(|x| B::of_f64(x.as_f64())).collect()
        }
        match self {
            Layer::Conv(c) => Layer::Conv(Conv2d {
                in_channels: c.in_channels,
                filters: c.filters,
                kernel_h: c.kernel_h,
                kernel_w: c.kernel_w,
                stride: c.stride,
                weight: cv(&c.weight),
                bias: c.bias.as_deref().map(cv),
            }),
            Layer::Dense(d) => Layer::Dense(Dense {
                inputs: d.inputs,
                outputs: d.outputs,
                weight: cv(&d.weight),
                bias: d.bias.as_deref().map(cv),
            }),
            Layer::Relu => Layer::Relu,
            Layer::BatchNorm(b) => Layer::BatchNorm(BatchNorm2d {
                channels: b.channels,
                gamma: cv(&b.gamma),
                beta: cv(&b.beta),
                running_mean: cv(&b.running_mean),
                running_var: cv(&b.running_var),
                eps: b.eps,
            }),
        }
    }
}

/// Batch size and `[c, h, w]` of a 4-d activation.
pub(crate) fn dims4<T: Real>(x: &Tensor<T>) -> (usize, [usize; 3]) {
    let s = x.shape();
    (s[0], [s[1], s[2], s[3]])
}

impl<T: Real> Conv2d<T> {
    fn geometry(&self, input: [usize; 3]) -> ConvGeometry {
        let [c, h, w] = input;
        ConvGeometry {
            channels: c,
            height: h,
            width: w,
            kernel_h: self.kernel_h,
            kernel_w: self.kernel_w,
            stride: self.stride,
            out_h: (h - self.kernel_h) / self.stride + 1,
            out_w: (w - self.kernel_w) / self.stride + 1,
        }
    }

    pub(crate) fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let (batch, dims) = dims4(x);
        let g = self.geometry(dims);
        let (k, p) = (g.patch_len(), g.positions());
        let out_len = self.filters * p;
        let mut out = vec![T::zero(); batch * out_len];
        let mut col = vec![T::zero(); k * p];
        for b in 0..batch {
            g.im2col(&x.data()[b * g.image_len()..(b + 1) * g.image_len()], &mut col);
            let dst = &mut out[b * out_len..(b + 1) * out_len];
            T::gemm(
                self.filters,
                k,
                p,
                T::one(),
                MatRef::row_major(&self.weight, k),
                MatRef::row_major(&col, p),
                T::zero(),
                MatMut::row_major(dst, p),
            );
            if let Some(bias) = &self.bias {
                for (plane, &bv) in dst.chunks_exact_mut(p).zip(bias) {
                    plane.iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        Tensor::from_parts(vec![batch, self.filters, g.out_h, g.out_w], out).expect("conv output shape")
    }

    /// Returns `(d_weight, d_bias, d_input)`; `d_input` only when requested.
    pub(crate) fn backward(
        &self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        need_input_grad: bool,
    ) -> (Vec<T>, Option<Vec<T>>, Option<Tensor<T>>) {
        let (batch, dims) = dims4(x);
        let g = self.geometry(dims);
        let (k, p) = (g.patch_len(), g.positions());
        let out_len = self.filters * p;
        let mut dw = vec![T::zero(); self.weight.len()];
        let mut db = self.bias.as_ref().map(|_| vec![T::zero(); self.filters]);
        let mut dx = need_input_grad.then(|| vec![T::zero(); x.len()]);
        let mut col = vec![T::zero(); k * p];
        let mut dcol = vec![T::zero(); if need_input_grad { k * p } else { 0 }];
        for b in 0..batch {
            let dyb = &dy.data()[b * out_len..(b + 1) * out_len];
            g.im2col(&x.data()[b * g.image_len()..(b + 1) * g.image_len()], &mut col);
            // dW += dY [f, p] * col^T [p, k]
            T::gemm(
                self.filters,
                p,
                k,
                T::one(),
                MatRef::row_major(dyb, p),
                MatRef::transposed(&col, p),
                T::one(),
                MatMut::row_major(&mut dw, k),
            );
            if let Some(db) = db.as_mut() {
                for (acc, plane) in db.iter_mut().zip(dyb.chunks_exact(p)) {
                    *acc += plane.iter().copied().sum::<T>();
                }
            }
            if let Some(dx) = dx.as_mut() {
                // dcol = W^T [k, f] * dY [f, p]
                T::gemm(
                    k,
                    self.filters,
                    p,
                    T::one(),
                    MatRef::transposed(&self.weight, k),
                    MatRef::row_major(dyb, p),
                    T::zero(),
                    MatMut::row_major(&mut dcol, p),
                );
                g.col2im(&dcol, &mut dx[b * g.image_len()..(b + 1) * g.image_len()]);
            }
        }
        let dx = dx.map(|d| Tensor::from_parts(x.shape().to_vec(), d).expect("conv input grad shape"));
        (dw, db, dx)
    }
}

impl<T: Real> Dense<T> {
    pub(crate) fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let batch = x.shape()[0];
        let mut out = vec![T::zero(); batch * self.outputs];
        T::gemm(
            batch,
            self.inputs,
            self.outputs,
            T::one(),
            MatRef::row_major(x.data(), self.inputs),
            MatRef::transposed(&self.weight, self.inputs),
            T::zero(),
            MatMut::row_major(&mut out, self.outputs),
        );
        if let Some(bias) = &self.bias {
            for row in out.chunks_exact_mut(self.outputs) {
                row.iter_mut().zip(bias).for_each(|(v, &b)| *v += b);
            }
        }
        Tensor::from_parts(vec![batch, self.outputs, 1, 1], out).expect("dense output shape")
    }

    pub(crate) fn backward(
        &self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        need_input_grad: bool,
    ) -> (Vec<T>, Option<Vec<T>>, Option<Tensor<T>>) {
        let batch = x.shape()[0];
        let mut dw = vec![T::zero(); self.weight.len()];
        // dW [o, i] = dY^T [o, b] * X [b, i]
        T::gemm(
            self.outputs,
            batch,
            self.inputs,
            T::one(),
            MatRef::transposed(dy.data(), self.outputs),
            MatRef::row_major(x.data(), self.inputs),
            T::zero(),
            MatMut::row_major(&mut dw, self.inputs),
        );
        let db = self.bias.as_ref().map(|_| {
            let mut db = vec![T::zero(); self.outputs];
            for row in dy.data().chunks_exact(self.outputs) {
                db.iter_mut().zip(row).for_each(|(a, &g)| *a += g);
            }
            db
        });
        let dx = need_input_grad.then(|| {
            let mut dx = vec![T::zero(); x.len()];
            T::gemm(
                batch,
                self.outputs,
                self.inputs,
                T::one(),
                MatRef::row_major(dy.data(), self.outputs),
                MatRef::row_major(&self.weight, self.inputs),
                T::zero(),
                MatMut::row_major(&mut dx, self.inputs),
            );
            Tensor::from_parts(x.shape().to_vec(), dx).expect("dense input grad shape")
        });
        (dw, db, dx)
    }
}

pub(crate) fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
    Tensor::from_parts(x.shape().to_vec(), data).expect("relu shape")
}

/// Gradient passes where the pre-activation is strictly positive.
pub(crate) fn relu_backward<T: Real>(x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_parts(x.shape().to_vec(), data).expect("relu grad shape")
}

/// Saved state of a batch-norm forward pass.
#[derive(Debug, Clone)]
pub(crate) struct BnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: usize,
    pub batch_stats: bool,
}

impl<T: Real> BatchNorm2d<T> {
    pub(crate) fn forward(&self, x: &Tensor<T>, use_batch_stats: bool) -> (Tensor<T>, BnCache<T>) {
        let (batch, [c, h, w]) = dims4(x);
        let plane = h * w;
        let count = batch * plane;
        let data = x.data();
        let (mean, var) = if use_batch_stats {
            let mut mean = vec![0.0f64; c];
            let mut var = vec![0.0f64; c];
            for ch in 0..c {
                let mut s = 0.0;
                for b in 0..batch {
                    let off = (b * c + ch) * plane;
                    s += data[off..off + plane].iter().map(|v| v.as_f64()).sum::<f64>();
                }
                let m = s / count as f64;
                let mut ss = 0.0;
                for b in 0..batch {
                    let off = (b * c + ch) * plane;
                    ss += data[off..off + plane].iter().map(|v| (v.as_f64() - m).powi(2)).sum::<f64>();
                }
                mean[ch] = m;
                var[ch] = ss / count as f64;
            }
            (mean, var)
        } else {
            (
                self.running_mean.iter().map(|v| v.as_f64()).collect(),
                self.running_var.iter().map(|v| v.as_f64()).collect(),
            )
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / Float::sqrt(v + self.eps)).collect();
        let mut xhat = vec![T::zero(); data.len()];
        let mut out = vec![T::zero(); data.len()];
        for b in 0..batch {
            for ch in 0..c {
                let off = (b * c + ch) * plane;
                let g = self.gamma[ch].as_f64();
                let be = self.beta[ch].as_f64();
                for i in off..off + plane {
                    let n = (data[i].as_f64() - mean[ch]) * inv_std[ch];
                    xhat[i] = T::of_f64(n);
                    out[i] = T::of_f64(g * n + be);
                }
            }
        }
        let out = Tensor::from_parts(x.shape().to_vec(), out).expect("bn shape");
        (out, BnCache { xhat, inv_std, mean, var, count, batch_stats: use_batch_stats })
    }

    /// Returns `(d_gamma, d_beta, d_input)`.
    pub(crate) fn backward(&self, cache: &BnCache<T>, dy: &Tensor<T>) -> (Vec<T>, Vec<T>, Tensor<T>) {
        let (batch, [c, h, w]) = dims4(dy);
        let plane = h * w;
        let m = cache.count as f64;
        let dyd = dy.data();
        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        let mut dx = vec![T::zero(); dyd.len()];
        for ch in 0..c {
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for b in 0..batch {
                let off = (b * c + ch) * plane;
                for i in off..off + plane {
                    let g = dyd[i].as_f64();
                    sum_dy += g;
                    sum_dy_xhat += g * cache.xhat[i].as_f64();
                }
            }
            dgamma[ch] = T::of_f64(sum_dy_xhat);
            dbeta[ch] = T::of_f64(sum_dy);
            let scale = self.gamma[ch].as_f64() * cache.inv_std[ch];
            for b in 0..batch {
                let off = (b * c + ch) * plane;
                for i in off..off + plane {
                    let g = dyd[i].as_f64();
                    dx[i] = T::of_f64(if cache.batch_stats {
                        scale / m * (m * g - sum_dy - cache.xhat[i].as_f64() * sum_dy_xhat)
                    } else {
                        scale * g
                    });
                }
            }
        }
        (dgamma, dbeta, Tensor::from_parts(dy.shape().to_vec(), dx).expect("bn grad shape"))
    }
}

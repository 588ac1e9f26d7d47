//! Batch-norm absorption and layerwise rescaling of ReLU networks.
//!
//! A weight layer `k` is a block `(W_k, b_k)`. Scaling by factors `c_1..c_K`
//! maps `W_k -> c_k W_k` and `b_k -> (c_1 ... c_k) b_k`; under ReLU the logits
//! are then multiplied by `c_1 ... c_K` exactly.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Layer, Mode, Network};
use crate::real::Real;
use crate::tensor::Tensor;

/// Exponent of an entrywise norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PNorm {
    Finite(f64),
    Infinity,
}

/// Entrywise Lp norm over a layer block, divided by `divisor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormKind {
    pub p: PNorm,
    pub divisor: f64,
}

impl NormKind {
    pub fn new(p: PNorm, divisor: f64) -> Result<Self> {
        if let PNorm::Finite(p) = p {
            if !(p >= 1.0 && p.is_finite()) {
                return Err(Error::InvalidArgument(format!("norm exponent must be >= 1, got {p}")));
            }
        }
        if !(divisor > 0.0 && divisor.is_finite()) {
            return Err(Error::InvalidArgument(format!("norm divisor must be positive, got {divisor}")));
        }
        Ok(Self { p, divisor })
    }

    /// Frobenius (entrywise L2).
    pub fn fro() -> Self {
        Self { p: PNorm::Finite(2.0), divisor: 1.0 }
    }

    /// Entrywise L1 scaled down by 100 to keep products representable.
    pub fn l1() -> Self {
        Self { p: PNorm::Finite(1.0), divisor: 100.0 }
    }

    pub fn linf() -> Self {
        Self { p: PNorm::Infinity, divisor: 1.0 }
    }

    /// Norm of a sequence of values, divisor applied.
    pub fn of(&self, values: impl IntoIterator<Item = f64>) -> f64 {
        let raw = match self.p {
            PNorm::Infinity => values.into_iter().fold(0.0, |m, v| m.max(v.abs())),
            PNorm::Finite(p) if p == 1.0 => values.into_iter().map(f64::abs).sum(),
            PNorm::Finite(p) if p == 2.0 => {
                // scaled sum of squares avoids overflow on large blocks
                let vals: Vec<f64> = values.into_iter().collect();
                let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if scale == 0.0 {
                    0.0
                } else {
                    scale * Float::sqrt(vals.iter().map(|v| (v / scale) * (v / scale)).sum::<f64>())
                }
            }
            PNorm::Finite(p) => {
                let vals: Vec<f64> = values.into_iter().collect();
                let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if scale == 0.0 {
                    0.0
                } else {
                    scale * Float::powf(vals.iter().map(|v| Float::powf((v / scale).abs(), p)).sum::<f64>(), 1.0 / p)
                }
            }
        };
        raw / self.divisor
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Self::fro() {
            f.write_str("fro")
        } else if *self == Self::l1() {
            f.write_str("l1")
        } else if *self == Self::linf() {
            f.write_str("linf")
        } else {
            match self.p {
                PNorm::Finite(p) => write!(f, "l{p}/{}", self.divisor),
                PNorm::Infinity => write!(f, "linf/{}", self.divisor),
            }
        }
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fro" => Ok(Self::fro()),
            "l1" => Ok(Self::l1()),
            "linf" => Ok(Self::linf()),
            _ => Err(Error::InvalidArgument(format!("unknown norm `{s}` (expected fro, l1 or linf)"))),
        }
    }
}

/// Norm of the concatenation of a layer's weights and its own bias.
pub fn layer_norm<T: Real>(weights: &[T], bias: Option<&[T]>, kind: &NormKind) -> f64 {
    let b = bias.unwrap_or(&[]);
    kind.of(weights.iter().chain(b).map(|v| v.as_f64()))
}

/// Folds every batch-norm layer into the convolution before it, using the
/// running statistics. Eval-mode outputs are unchanged.
pub fn absorb_batchnorm<T: Real>(net: &Network<T>) -> Result<Network<T>> {
    let mut out: Vec<Layer<T>> = Vec::with_capacity(net.layers().len());
    for (i, layer) in net.layers().iter().enumerate() {
        let Layer::BatchNorm(bn) = layer else {
            out.push(layer.clone());
            continue;
        };
        let Some(Layer::Conv(conv)) = out.last_mut() else {
            return Err(Error::InvalidArgument(format!("batch norm at layer {i} does not follow a convolution")));
        };
        let per_filter = conv.in_channels * conv.kernel_h * conv.kernel_w;
        let mut bias = Vec::with_capacity(conv.filters);
        for f in 0..conv.filters {
            let denom = bn.running_var[f].as_f64() + bn.eps;
            if !(denom > 0.0) {
                return Err(Error::BatchNormVariance { layer: i, value: denom });
            }
            let s = bn.gamma[f].as_f64() / Float::sqrt(denom);
            for w in &mut conv.weight[f * per_filter..(f + 1) * per_filter] {
                *w = T::of_f64(w.as_f64() * s);
            }
            let b0 = conv.bias.as_ref().map_or(0.0, |b| b[f].as_f64());
            bias.push(T::of_f64((b0 - bn.running_mean[f].as_f64()) * s + bn.beta[f].as_f64()));
        }
        conv.bias = Some(bias);
    }
    net.with_layers(out)
}

fn weight_layer_count<T: Real>(net: &Network<T>) -> usize {
    net.layers().iter().filter(|l| l.weight_and_bias().is_some()).count()
}

/// Multiplies weight layer `k` by `scales[k]` and its bias by the running
/// product of scales up to `k`. Logits scale by the product of all factors.
pub fn scale_layers<T: Real>(net: &Network<T>, scales: &[f64]) -> Result<Network<T>> {
    if net.has_batchnorm() {
        return Err(Error::BatchNormPresent);
    }
    let k = weight_layer_count(net);
    if scales.len() != k {
        return Err(Error::Shape(format!("{} scales for {k} weight layers", scales.len())));
    }
    if let Some(s) = scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument(format!("scales must be positive and finite, got {s}")));
    }
    let mut out = net.clone();
    let mut cumulative = 1.0;
    let mut it = scales.iter();
    for layer in out.layers_mut() {
        let Some((w, b)) = layer.weight_and_bias_mut() else { continue };
        let s = *it.next().expect("scale count checked");
        cumulative *= s;
        w.iter_mut().for_each(|v| *v = T::of_f64(v.as_f64() * s));
        if let Some(b) = b {
            b.iter_mut().for_each(|v| *v = T::of_f64(v.as_f64() * cumulative));
        }
    }
    Ok(out)
}

/// A unit-norm network together with the per-layer scales it was divided by.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedNetwork<T> {
    pub network: Network<T>,
    /// One factor per weight layer, in forward order.
    pub rho: Vec<f64>,
    /// Product of `rho`: original logits = normalized logits * product_norm.
    pub product_norm: f64,
    pub kind: NormKind,
    /// Digest of the checkpoint the network came from, when known.
    pub source_digest: Option<String>,
}

/// Per-layer scale factors. Layer `k`'s bias is measured after division by the
/// product of the earlier factors, so every block of the result has norm 1.
pub fn layer_scales<T: Real>(net: &Network<T>, kind: &NormKind) -> Result<Vec<f64>> {
    if net.has_batchnorm() {
        return Err(Error::BatchNormPresent);
    }
    let mut rho = Vec::new();
    let mut prefix = 1.0;
    for (i, layer) in net.layers().iter().enumerate() {
        let Some((w, b)) = layer.weight_and_bias() else { continue };
        let b = b.unwrap_or(&[]);
        let r = kind.of(w.iter().map(|v| v.as_f64()).chain(b.iter().map(|v| v.as_f64() / prefix)));
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::DegenerateLayer { layer: i });
        }
        prefix *= r;
        rho.push(r);
    }
    Ok(rho)
}

/// Divides each weight layer by its norm (biases by the cumulative product).
pub fn normalize_layerwise<T: Real>(net: &Network<T>, kind: NormKind) -> Result<NormalizedNetwork<T>> {
    let rho = layer_scales(net, &kind)?;
    let inv: Vec<f64> = rho.iter().map(|r| 1.0 / r).collect();
    let network = scale_layers(net, &inv)?;
    let product_norm = rho.iter().product();
    Ok(NormalizedNetwork { network, rho, product_norm, kind, source_digest: None })
}

/// Product of the layer scales; for bias-free layers above the first this is
/// the plain product of per-layer norms.
pub fn product_norm<T: Real>(net: &Network<T>, kind: &NormKind) -> Result<f64> {
    Ok(layer_scales(net, kind)?.iter().product())
}

/// Outcome of comparing a rescaled network against the predicted scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReport {
    /// Product of the applied scales.
    pub factor: f64,
    /// Largest elementwise relative deviation between scaled logits and
    /// `factor` times the original logits.
    pub max_relative_deviation: f64,
    pub argmax_agrees: bool,
}

impl HomogeneityReport {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.argmax_agrees && self.max_relative_deviation <= tolerance
    }
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_deviation(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(b.abs())
    }
}

/// Largest elementwise relative deviation between `a * factor` and `b`.
pub fn max_relative_deviation<T: Real>(a: &Tensor<T>, factor: f64, b: &Tensor<T>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| relative_deviation(x.as_f64() * factor, y.as_f64()))
        .fold(0.0, f64::max))
}

/// Checks that scaling by `scales` multiplies eval-mode logits by their product.
pub fn verify_homogeneity<T: Real>(net: &Network<T>, scales: &[f64], inputs: &Tensor<T>) -> Result<HomogeneityReport> {
    let scaled = scale_layers(net, scales)?;
    let factor: f64 = scales.iter().product();
    let base = net.forward(inputs, Mode::Eval)?;
    let out = scaled.forward(inputs, Mode::Eval)?;
    let max_relative_deviation = max_relative_deviation(&base, factor, &out)?;
    let n = base.shape()[0];
    let argmax_agrees = (0..n).all(|i| crate::nn::argmax(base.row(i)) == crate::nn::argmax(out.row(i)));
    Ok(HomogeneityReport { factor, max_relative_deviation, argmax_agrees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_gaussian, LayerSpec};
    use alloc::string::ToString;
    use alloc::vec;

    fn dense(w: Vec<f64>, inputs: usize, outputs: usize, bias: Option<Vec<f64>>) -> Network<f64> {
        let spec = LayerSpec::Dense { inputs, outputs, bias: bias.is_some() };
        let mut net = Network::from_specs("dense", [inputs, 1, 1], outputs, &[spec]).unwrap();
        let (wm, bm) = net.layers_mut()[0].weight_and_bias_mut().unwrap();
        *wm = w;
        *bm = bias;
        net
    }

    #[test]
    fn norm_fixtures() {
        assert_eq!(layer_norm(&[3.0f64, 4.0], None, &NormKind::fro()), 5.0);
        assert_eq!(layer_norm(&[1.0f64; 100], None, &NormKind::l1()), 1.0);
        assert_eq!(layer_norm(&[1.0f64, -7.0], Some(&[2.0]), &NormKind::linf()), 7.0);
        assert_eq!(layer_norm(&[3.0f64], Some(&[4.0]), &NormKind::fro()), 5.0);
        let l3 = NormKind::new(PNorm::Finite(3.0), 1.0).unwrap();
        assert!((layer_norm(&[1.0f64, 2.0], None, &l3) - 9f64.cbrt()).abs() < 1e-14);
        assert!(NormKind::new(PNorm::Finite(0.5), 1.0).is_err());
        assert!(NormKind::new(PNorm::Infinity, 0.0).is_err());
    }

    #[test]
    fn names_round_trip() {
        for k in [NormKind::fro(), NormKind::l1(), NormKind::linf()] {
            assert_eq!(k.to_string().parse::<NormKind>().unwrap(), k);
        }
        assert!("l7".parse::<NormKind>().is_err());
    }

    #[test]
    fn one_layer_fixture() {
        let n = normalize_layerwise(&dense(vec![3.0, 4.0], 2, 1, None), NormKind::fro()).unwrap();
        assert_eq!(n.rho, vec![5.0]);
        let (w, _) = n.network.layers()[0].weight_and_bias().unwrap();
        assert!((w[0] - 0.6).abs() < 1e-15 && (w[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn unit_net_is_fixed_point() {
        let net = dense(vec![0.6, 0.8], 2, 1, None);
        let n = normalize_layerwise(&net, NormKind::fro()).unwrap();
        assert!((n.rho[0] - 1.0).abs() < 1e-15);
        assert_eq!(n.product_norm, n.rho[0]);
    }

    #[test]
    fn zero_layer_is_degenerate() {
        let net = dense(vec![0.0, 0.0], 2, 1, None);
        assert_eq!(normalize_layerwise(&net, NormKind::fro()), Err(Error::DegenerateLayer { layer: 0 }));
    }

    fn two_layer() -> Network<f64> {
        let specs = [
            LayerSpec::Dense { inputs: 3, outputs: 4, bias: true },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: 4, outputs: 2, bias: true },
        ];
        let mut net = Network::from_specs("mlp", [3, 1, 1], 2, &specs).unwrap();
        init_gaussian(&mut net, 0.7, 3).unwrap();
        for (i, l) in net.layers_mut().iter_mut().enumerate() {
            if let Some((_, Some(b))) = l.weight_and_bias_mut() {
                b.iter_mut().enumerate().for_each(|(j, v)| *v = 0.1 * (i + j) as f64 - 0.2);
            }
        }
        net
    }

    #[test]
    fn product_of_two_norms() {
        let specs = [
            LayerSpec::Dense { inputs: 1, outputs: 1, bias: false },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: 1, outputs: 1, bias: false },
        ];
        let mut net = Network::from_specs("mlp", [1, 1, 1], 1, &specs).unwrap();
        net.layers_mut()[0].weight_and_bias_mut().unwrap().0[0] = 2.0;
        net.layers_mut()[2].weight_and_bias_mut().unwrap().0[0] = -3.0;
        assert_eq!(product_norm(&net, &NormKind::fro()).unwrap(), 6.0);
    }

    #[test]
    fn biased_layers_normalize_to_unit_blocks() {
        let net = two_layer();
        for kind in [NormKind::fro(), NormKind::l1(), NormKind::linf()] {
            let n = normalize_layerwise(&net, kind).unwrap();
            for l in n.network.layers() {
                if let Some((w, b)) = l.weight_and_bias() {
                    assert!((layer_norm(w, b, &kind) - 1.0).abs() < 1e-12);
                }
            }
            let again = normalize_layerwise(&n.network, kind).unwrap();
            assert!(again.rho.iter().all(|r| (r - 1.0).abs() < 1e-12), "{:?}", again.rho);
            let x = Tensor::new(vec![5, 3, 1, 1], (0..15).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
            let a = net.forward(&x, Mode::Eval).unwrap();
            let b = n.network.forward(&x, Mode::Eval).unwrap();
            assert!(max_relative_deviation(&b, n.product_norm, &a).unwrap() < 1e-12);
        }
    }

    #[test]
    fn homogeneity_cases() {
        let net = two_layer();
        let x = Tensor::new(vec![4, 3, 1, 1], (0..12).map(|i| (i as f64).cos()).collect()).unwrap();
        let r = verify_homogeneity(&net, &[1.0, 1.0], &x).unwrap();
        assert_eq!(r.max_relative_deviation, 0.0);
        assert!(r.holds(0.0));
        let r = verify_homogeneity(&net, &[2.5, 0.3], &x).unwrap();
        assert!((r.factor - 0.75).abs() < 1e-15);
        assert!(r.holds(1e-12), "{r:?}");
        assert!(verify_homogeneity(&net, &[1.0], &x).is_err());
        assert!(verify_homogeneity(&net, &[1.0, -1.0], &x).is_err());
    }

    #[test]
    fn bias_free_reciprocal_scales_leave_outputs_equal() {
        let specs = [
            LayerSpec::Dense { inputs: 3, outputs: 3, bias: false },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: 3, outputs: 2, bias: false },
        ];
        let mut net = Network::<f64>::from_specs("mlp", [3, 1, 1], 2, &specs).unwrap();
        init_gaussian(&mut net, 1.0, 8).unwrap();
        let x = Tensor::new(vec![2, 3, 1, 1], vec![1.0, -0.5, 0.2, 0.3, 0.9, -1.1]).unwrap();
        let r = verify_homogeneity(&net, &[2.0, 0.5], &x).unwrap();
        assert_eq!(r.factor, 1.0);
        assert!(r.max_relative_deviation < 1e-15);
    }

    fn conv_bn(gamma: f64, beta: f64, mean: f64, var: f64, eps: f64) -> Network<f64> {
        let specs = [
            LayerSpec::Conv { in_channels: 1, filters: 1, kernel_h: 1, kernel_w: 1, stride: 1, bias: false },
            LayerSpec::BatchNorm { channels: 1, eps },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: 1, outputs: 1, bias: false },
        ];
        let mut net = Network::from_specs("cb", [1, 1, 1], 1, &specs).unwrap();
        net.layers_mut()[0].weight_and_bias_mut().unwrap().0[0] = 1.0;
        net.layers_mut()[3].weight_and_bias_mut().unwrap().0[0] = 1.0;
        if let Layer::BatchNorm(bn) = &mut net.layers_mut()[1] {
            bn.gamma[0] = gamma;
            bn.beta[0] = beta;
            bn.running_mean[0] = mean;
            bn.running_var[0] = var;
        }
        net
    }

    #[test]
    fn absorption_fixtures() {
        let id = absorb_batchnorm(&conv_bn(1.0, 0.0, 0.0, 1.0, 0.0)).unwrap();
        assert!(!id.has_batchnorm());
        assert_eq!(id.layers()[0].weight_and_bias().unwrap(), (&[1.0][..], Some(&[0.0][..])));

        let two = absorb_batchnorm(&conv_bn(2.0, 0.0, 0.0, 1.0, 0.0)).unwrap();
        assert_eq!(two.layers()[0].weight_and_bias().unwrap().0, &[2.0]);

        let shifted = absorb_batchnorm(&conv_bn(2.0, 0.5, 1.0, 4.0, 0.0)).unwrap();
        // (0 - 1) * 2 / 2 + 0.5
        assert_eq!(shifted.layers()[0].weight_and_bias().unwrap(), (&[1.0][..], Some(&[-0.5][..])));

        assert_eq!(
            absorb_batchnorm(&conv_bn(1.0, 0.0, 0.0, 0.0, 0.0)),
            Err(Error::BatchNormVariance { layer: 1, value: 0.0 })
        );
        assert_eq!(normalize_layerwise(&conv_bn(1.0, 0.0, 0.0, 1.0, 0.0), NormKind::fro()), Err(Error::BatchNormPresent));
    }
}

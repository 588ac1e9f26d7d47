use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::layer::{LayerSpec, BN_EPS};
use super::network::Network;
use crate::error::{Error, Result};
use crate::real::Real;

/// The three catalog networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    /// 3-layer ReLU convnet, 24 filters of 5x5, on 3x32x32 inputs.
    #[serde(rename = "cifar3x24")]
    Cifar3x24,
    /// Same topology with 34 filters on 1x28x28 inputs.
    #[serde(rename = "mnist3x34")]
    Mnist3x34,
    /// Four 3x3 convs (32, 64, 64, 128 filters) with batch norm, then a dense layer.
    #[serde(rename = "conv5")]
    Conv5,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::Cifar3x24, Architecture::Mnist3x34, Architecture::Conv5];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Cifar3x24 => "cifar3x24",
            Architecture::Mnist3x34 => "mnist3x34",
            Architecture::Conv5 => "conv5",
        }
    }

    pub fn input_shape(self) -> [usize; 3] {
        match self {
            Architecture::Mnist3x34 => [1, 28, 28],
            Architecture::Cifar3x24 | Architecture::Conv5 => [3, 32, 32],
        }
    }

    pub fn supports_classes(self, class_count: usize) -> bool {
        match self {
            Architecture::Mnist3x34 => matches!(class_count, 2 | 10),
            Architecture::Cifar3x24 | Architecture::Conv5 => matches!(class_count, 2 | 10 | 100),
        }
    }

    /// Layer stack for `class_count` outputs.
    pub fn specs(self, class_count: usize) -> Result<Vec<LayerSpec>> {
        if !self.supports_classes(class_count) {
            return Err(Error::ClassCount { arch: self.name(), class_count });
        }
        let specs = match self {
            Architecture::Cifar3x24 => three_layer(3, 24, 32, class_count),
            Architecture::Mnist3x34 => three_layer(1, 34, 28, class_count),
            Architecture::Conv5 => {
                let filters = [32usize, 64, 64, 128];
                let mut specs = Vec::new();
                let mut channels = 3;
                let mut extent = 32;
                for &f in &filters {
                    specs.push(LayerSpec::Conv {
                        in_channels: channels,
                        filters: f,
                        kernel_h: 3,
                        kernel_w: 3,
                        stride: 2,
                        bias: false,
                    });
                    specs.push(LayerSpec::BatchNorm { channels: f, eps: BN_EPS });
                    specs.push(LayerSpec::Relu);
                    channels = f;
                    extent = (extent - 3) / 2 + 1;
                }
                specs.push(LayerSpec::Dense { inputs: channels * extent * extent, outputs: class_count, bias: true });
                specs
            }
        };
        Ok(specs)
    }
}

/// conv(5x5, bias) -> relu -> conv(5x5) -> relu -> dense, valid stride-1 convolutions.
fn three_layer(in_channels: usize, filters: usize, extent: usize, class_count: usize) -> Vec<LayerSpec> {
    let after = extent - 8;
    vec![
        LayerSpec::Conv { in_channels, filters, kernel_h: 5, kernel_w: 5, stride: 1, bias: true },
        LayerSpec::Relu,
        LayerSpec::Conv { in_channels: filters, filters, kernel_h: 5, kernel_w: 5, stride: 1, bias: false },
        LayerSpec::Relu,
        LayerSpec::Dense { inputs: filters * after * after, outputs: class_count, bias: false },
    ]
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::UnknownArchitecture(s.to_string()))
    }
}

/// Zero-weight catalog network.
pub fn build_architecture<T: Real>(arch: Architecture, class_count: usize) -> Result<Network<T>> {
    Network::from_specs(arch.name(), arch.input_shape(), class_count, &arch.specs(class_count)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_layer_counts() {
        let cifar = build_architecture::<f32>(Architecture::Cifar3x24, 10).unwrap();
        assert_eq!(cifar.param_count(), 154_464);
        let per_layer: Vec<usize> = cifar.specs().iter().map(|s| s.param_count()).collect();
        assert_eq!(per_layer, vec![1_824, 0, 14_400, 0, 138_240]);
        let spatial: Vec<usize> = cifar.activation_shapes().iter().map(|s| s[1]).collect();
        assert_eq!(&spatial[..4], &[28, 28, 24, 24]);

        let mnist = build_architecture::<f32>(Architecture::Mnist3x34, 10).unwrap();
        assert_eq!(mnist.param_count(), 165_784);
    }

    #[test]
    fn conv5_count_is_reported_not_matched() {
        let net = build_architecture::<f32>(Architecture::Conv5, 10).unwrap();
        // 864 + 18432 + 36864 + 73728 conv, 2*(32+64+64+128) bn, 128*10+10 dense
        assert_eq!(net.param_count(), 131_754);
        assert_ne!(net.param_count(), 188_810);
    }

    #[test]
    fn dense_no_bias_count() {
        let net = Network::<f64>::from_specs(
            "dense",
            [10, 1, 1],
            10,
            &[LayerSpec::Dense { inputs: 10, outputs: 10, bias: false }],
        )
        .unwrap();
        assert_eq!(net.param_count(), 100);
    }

    #[test]
    fn rejects_unknown_and_incompatible() {
        assert_eq!("resnet".parse::<Architecture>(), Err(Error::UnknownArchitecture("resnet".into())));
        assert!(build_architecture::<f32>(Architecture::Mnist3x34, 100).is_err());
        assert!(build_architecture::<f32>(Architecture::Cifar3x24, 7).is_err());
        for a in Architecture::ALL {
            assert_eq!(a.name().parse::<Architecture>().unwrap(), a);
        }
    }
}

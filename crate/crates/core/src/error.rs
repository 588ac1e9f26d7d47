use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("label {label} out of range for {class_count} classes")]
    LabelOutOfRange { label: usize, class_count: usize },
    #[error("unknown architecture `{0}`")]
    UnknownArchitecture(String),
    #[error("architecture {arch} does not support {class_count} classes")]
    ClassCount { arch: &'static str, class_count: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("layer {layer} has zero norm")]
    DegenerateLayer { layer: usize },
    #[error("batch norm at layer {layer}: running variance + eps = {value} is not positive")]
    BatchNormVariance { layer: usize, value: f64 },
    #[error("batch norm layers must be absorbed first")]
    BatchNormPresent,
    #[error("diverged: {0}")]
    Diverged(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

//! Minimal CPU tensor engine: NCHW tensors, layers with explicit backward
//! passes, and an Adam optimizer.

mod adam;
mod direct;
mod layers;
mod scalar;
mod tensor;

pub use adam::Adam;
pub(crate) use layers::join;
pub use layers::{
    pixel_shuffle, pixel_unshuffle, sigmoid, BatchNorm2d, Conv2d, LeakyRelu, MaxPool2d, Mode, Module, PRelu, Param,
    ParamKind, Sigmoid,
};
pub use scalar::{gemm, MatView, Scalar};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("{channels} channels are not divisible by the squared factor {factor}^2")]
    ChannelNotDivisible { channels: usize, factor: usize },
    #[error("empty batch")]
    EmptyBatch,
}

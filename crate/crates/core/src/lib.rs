//! Binary segmentation pipeline: a U-Net with a residual encoder trained by
//! reverse-mode autodiff, an RLE mask codec, image pre/post-processing,
//! Dice/IoU evaluation, a training loop with early stopping and an HTTP
//! review service.

pub mod data;
pub mod error;
pub mod imaging;
pub mod infer;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod optim;
pub mod rle;
pub mod service;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use mask::BinaryMask;
pub use tensor::{no_grad, Parameter, Tensor};

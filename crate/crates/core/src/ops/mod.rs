//! Differentiable layer primitives.

mod conv;
mod elementwise;
mod norm;
mod spatial;

pub use conv::conv2d;
pub use elementwise::{add, mean, mul, relu, sigmoid, sum};
pub use norm::{batch_norm, Mode, RunningStats};
pub use spatial::{concat_channels, max_pool2, slice_channels, upsample2_nearest};

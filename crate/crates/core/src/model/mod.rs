//! U-Net assembly, configuration and checkpoints.

mod checkpoint;
mod layers;
mod unet;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use layers::{BatchNorm2d, Conv2d, ResidualBlock, BN_EPS, BN_MOMENTUM};
pub use unet::{UNet, ENCODER_PREFIX};

pub use crate::ops::Mode;
use crate::error::ModelError;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Number of down/up stages.
    pub depth: usize,
    /// Channels of the first stage; stage `i` has `base_channels << i`.
    pub base_channels: usize,
    /// Residual blocks per encoder stage and in the bottleneck.
    pub blocks_per_stage: usize,
    /// Side length that inputs are resized to before inference.
    pub image_size: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            out_channels: 1,
            depth: 4,
            base_channels: 16,
            blocks_per_stage: 2,
            image_size: 256,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn stage_channels(&self, stage: usize) -> usize {
        self.base_channels << stage
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.in_channels == 0 || self.out_channels == 0 {
            return fail("in_channels and out_channels must be >= 1".into());
        }
        if self.depth < 2 {
            return fail(format!("depth must be >= 2, got {}", self.depth));
        }
        if self.depth > 16 {
            return fail(format!("depth must be <= 16, got {}", self.depth));
        }
        if self.base_channels == 0 {
            return fail("base_channels must be >= 1".into());
        }
        if self.blocks_per_stage == 0 {
            return fail("blocks_per_stage must be >= 1".into());
        }
        let div = 1usize << self.depth;
        if self.image_size == 0 || self.image_size % div != 0 {
            return fail(format!(
                "image_size {} must be divisible by 2^depth = {div}",
                self.image_size
            ));
        }
        Ok(())
    }

    pub(crate) fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("in_channels", self.in_channels.to_string()),
            ("out_channels", self.out_channels.to_string()),
            ("depth", self.depth.to_string()),
            ("base_channels", self.base_channels.to_string()),
            ("blocks_per_stage", self.blocks_per_stage.to_string()),
            ("image_size", self.image_size.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    pub(crate) fn set_kv(&mut self, key: &str, value: &str) -> Result<(), String> {
        let num = || value.parse::<usize>().map_err(|_| format!("{key}={value:?} is not an integer"));
        match key {
            "in_channels" => self.in_channels = num()?,
            "out_channels" => self.out_channels = num()?,
            "depth" => self.depth = num()?,
            "base_channels" => self.base_channels = num()?,
            "blocks_per_stage" => self.blocks_per_stage = num()?,
            "image_size" => self.image_size = num()?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| format!("seed={value:?} is not an integer"))?
            }
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }
}

/// A named array with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

impl NamedArray {
    pub fn new(name: String, shape: Vec<usize>, values: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self { name, shape, values }
    }

    /// Running statistics rather than trainable weights.
    pub fn is_buffer(&self) -> bool {
        self.name.ends_with(".running_mean") || self.name.ends_with(".running_var")
    }
}

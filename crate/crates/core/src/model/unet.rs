use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{head_params, head_params_mut, Conv2d, ResidualBlock};
use super::{ModelConfig, NamedArray};
use crate::error::{CheckpointError, ModelError};
use crate::ops::{self, Mode};
use crate::tensor::{Parameter, Tensor};

/// Prefix shared by every encoder parameter name.
pub const ENCODER_PREFIX: &str = "enc";

/// U-Net with residual encoder stages, a residual bottleneck, a decoder of
/// upsample + skip-concat + residual block, and a 1×1 sigmoid head.
///
/// Names follow `enc{stage}.block{j}.*`, `bottleneck.block{j}.*`,
/// `dec{stage}.block0.*` and `head.*`.
#[derive(Debug)]
pub struct UNet {
    config: ModelConfig,
    encoder: Vec<Vec<ResidualBlock>>,
    bottleneck: Vec<ResidualBlock>,
    /// Indexed by stage, shallowest first.
    decoder: Vec<ResidualBlock>,
    head: Conv2d,
}

impl UNet {
    pub fn build(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let ch = |i: usize| config.stage_channels(i);

        let mut encoder = Vec::with_capacity(config.depth);
        for stage in 0..config.depth {
            let mut blocks = Vec::with_capacity(config.blocks_per_stage);
            for j in 0..config.blocks_per_stage {
                let c_in = match (stage, j) {
                    (0, 0) => config.in_channels,
                    (s, 0) => ch(s - 1),
                    (s, _) => ch(s),
                };
                blocks.push(ResidualBlock::new(
                    &format!("{ENCODER_PREFIX}{stage}.block{j}"),
                    c_in,
                    ch(stage),
                    &mut rng,
                )?);
            }
            encoder.push(blocks);
        }

        let deepest = ch(config.depth);
        let mut bottleneck = Vec::with_capacity(config.blocks_per_stage);
        for j in 0..config.blocks_per_stage {
            let c_in = if j == 0 { ch(config.depth - 1) } else { deepest };
            bottleneck.push(ResidualBlock::new(
                &format!("bottleneck.block{j}"),
                c_in,
                deepest,
                &mut rng,
            )?);
        }

        let mut decoder = Vec::with_capacity(config.depth);
        for stage in (0..config.depth).rev() {
            decoder.push(ResidualBlock::new(
                &format!("dec{stage}.block0"),
                ch(stage + 1) + ch(stage),
                ch(stage),
                &mut rng,
            )?);
        }
        decoder.reverse();

        let head = Conv2d::new("head", ch(0), config.out_channels, 1, 1, 0, true, &mut rng)?;
        Ok(Self {
            config,
            encoder,
            bottleneck,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Probability map of shape N×out_channels×H×W.
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor, ModelError> {
        self.forward_inner(x, mode, None)
    }

    pub(crate) fn forward_inner(
        &self,
        x: &Tensor,
        mode: Mode,
        zero_skip: Option<usize>,
    ) -> Result<Tensor, ModelError> {
        self.check_input(x)?;
        let mut skips = Vec::with_capacity(self.config.depth);
        let mut h = x.clone();
        for blocks in &self.encoder {
            for block in blocks {
                h = block.forward(&h, mode)?;
            }
            skips.push(h.clone());
            h = ops::max_pool2(&h)?;
        }
        for block in &self.bottleneck {
            h = block.forward(&h, mode)?;
        }
        for stage in (0..self.config.depth).rev() {
            let up = ops::upsample2_nearest(&h)?;
            let skip = if zero_skip == Some(stage) {
                Tensor::zeros(skips[stage].shape())
            } else {
                skips[stage].clone()
            };
            h = self.decoder[stage].forward(&ops::concat_channels(&up, &skip)?, mode)?;
        }
        Ok(ops::sigmoid(&self.head.forward(&h)?))
    }

    fn check_input(&self, x: &Tensor) -> Result<(), ModelError> {
        let &[_, c, h, w] = x.shape() else {
            return Err(ModelError::BadInput {
                what: "shape",
                detail: format!("expected N×C×H×W, got {:?}", x.shape()),
            });
        };
        if c != self.config.in_channels {
            return Err(ModelError::BadInput {
                what: "channels",
                detail: format!("model expects {} channels, got {c}", self.config.in_channels),
            });
        }
        let div = 1usize << self.config.depth;
        if h == 0 || w == 0 || h % div != 0 || w % div != 0 {
            return Err(ModelError::BadInput {
                what: "spatial size",
                detail: format!("{h}x{w} is not divisible by 2^depth = {div}"),
            });
        }
        Ok(())
    }

    /// Trainable parameters in a fixed order.
    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        for block in self.encoder.iter().flatten() {
            block.params(&mut out);
        }
        for block in &self.bottleneck {
            block.params(&mut out);
        }
        for block in &self.decoder {
            block.params(&mut out);
        }
        head_params(&self.head, &mut out);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        for block in self.encoder.iter_mut().flatten() {
            block.params_mut(&mut out);
        }
        for block in &mut self.bottleneck {
            block.params_mut(&mut out);
        }
        for block in &mut self.decoder {
            block.params_mut(&mut out);
        }
        head_params_mut(&mut self.head, &mut out);
        out
    }

    fn blocks(&self) -> impl Iterator<Item = &ResidualBlock> {
        self.encoder
            .iter()
            .flatten()
            .chain(&self.bottleneck)
            .chain(&self.decoder)
    }

    /// Batch-norm running statistics.
    pub fn buffers(&self) -> Vec<NamedArray> {
        let mut out = Vec::new();
        for block in self.blocks() {
            block.buffers(&mut out);
        }
        out
    }

    /// Parameters followed by buffers, as stored in a checkpoint.
    pub fn named_arrays(&self) -> Vec<NamedArray> {
        let mut out: Vec<NamedArray> = self
            .parameters()
            .into_iter()
            .map(|p| NamedArray::new(p.name().to_string(), p.shape().to_vec(), p.data().to_vec()))
            .collect();
        out.extend(self.buffers());
        out
    }

    /// Overwrites one named parameter or buffer.
    pub fn set_array(&mut self, name: &str, shape: &[usize], values: &[f32]) -> Result<(), CheckpointError> {
        for p in self.parameters_mut() {
            if p.name() == name {
                if p.shape() != shape {
                    return Err(CheckpointError::ShapeMismatch {
                        name: name.to_string(),
                        expected: p.shape().to_vec(),
                        found: shape.to_vec(),
                    });
                }
                p.set_data(values.to_vec()).expect("shape checked");
                return Ok(());
            }
        }
        let mut buffers = Vec::new();
        for block in self
            .encoder
            .iter_mut()
            .flatten()
            .chain(self.bottleneck.iter_mut())
            .chain(self.decoder.iter_mut())
        {
            block.buffers_mut(&mut buffers);
        }
        for (bname, slot) in buffers {
            if bname == name {
                if shape != [slot.len()] {
                    return Err(CheckpointError::ShapeMismatch {
                        name: name.to_string(),
                        expected: vec![slot.len()],
                        found: shape.to_vec(),
                    });
                }
                slot.copy_from_slice(values);
                return Ok(());
            }
        }
        Err(CheckpointError::UnknownArray(name.to_string()))
    }

    /// Total element count of the trainable parameters.
    pub fn count_params(&self) -> usize {
        self.parameters().iter().map(|p| p.data().len()).sum()
    }

    pub fn zero_grad(&self) {
        for p in self.parameters() {
            p.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn small(seed: u64) -> UNet {
        UNet::build(ModelConfig {
            depth: 2,
            base_channels: 4,
            blocks_per_stage: 1,
            image_size: 16,
            seed,
            ..ModelConfig::default()
        })
        .unwrap()
    }

    fn random_input(n: usize, size: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0f32, 1.0).unwrap();
        let data = (0..n * size * size).map(|_| dist.sample(&mut rng)).collect();
        Tensor::new(data, &[n, 1, size, size]).unwrap()
    }

    #[test]
    fn skip_connections_are_wired() {
        let model = small(3);
        let x = random_input(1, 16, 9);
        let base = model.forward_inner(&x, Mode::Eval, None).unwrap();
        for stage in 0..2 {
            let cut = model.forward_inner(&x, Mode::Eval, Some(stage)).unwrap();
            assert_ne!(base.data(), cut.data(), "stage {stage} skip has no effect");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = small(0);
        assert!(model.forward(&Tensor::zeros(&[1, 2, 16, 16]), Mode::Eval).is_err());
        assert!(model.forward(&Tensor::zeros(&[1, 1, 18, 16]), Mode::Eval).is_err());
        assert!(model.forward(&Tensor::zeros(&[1, 16, 16]), Mode::Eval).is_err());
    }

    #[test]
    fn parameter_names_unique() {
        let model = small(0);
        let mut names: Vec<String> = model.named_arrays().into_iter().map(|a| a.name).collect();
        let n = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), n);
        assert!(names.iter().any(|n| n == "enc0.block0.conv1.weight"));
        assert!(names.iter().any(|n| n == "head.bias"));
    }

    #[test]
    fn set_array_checks_shape() {
        let mut model = small(0);
        let err = model.set_array("head.weight", &[1, 4, 3, 3], &[0.0; 36]).unwrap_err();
        assert!(matches!(err, CheckpointError::ShapeMismatch { .. }));
        model.set_array("head.bias", &[1], &[0.25]).unwrap();
        assert!(model.parameters().iter().any(|p| p.name() == "head.bias" && p.data() == [0.25]));
        model
            .set_array("enc0.block0.bn1.running_mean", &[4], &[1.0, 2.0, 3.0, 4.0])
            .unwrap();
        assert!(model.set_array("nope", &[1], &[0.0]).is_err());
    }
}

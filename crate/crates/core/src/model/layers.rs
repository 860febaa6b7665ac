use std::sync::Mutex;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::NamedArray;
use crate::error::TensorError;
use crate::ops::{self, Mode, RunningStats};
use crate::tensor::{Parameter, Tensor};

pub const BN_MOMENTUM: f32 = 0.1;
pub const BN_EPS: f32 = 1e-5;

/// He (fan-in) normal initialization.
fn he_normal<R: Rng + ?Sized>(rng: &mut R, n: usize, fan_in: usize) -> Vec<f32> {
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("finite std");
    (0..n).map(|_| dist.sample(rng) as f32).collect()
}

#[derive(Debug)]
pub struct Conv2d {
    pub weight: Parameter,
    pub bias: Option<Parameter>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        let fan_in = in_channels * kernel * kernel;
        let w = he_normal(rng, out_channels * fan_in, fan_in.max(1));
        Ok(Self {
            weight: Parameter::new(
                format!("{name}.weight"),
                w,
                &[out_channels, in_channels, kernel, kernel],
            )?,
            bias: if bias {
                Some(Parameter::new(format!("{name}.bias"), vec![0.0; out_channels], &[out_channels])?)
            } else {
                None
            },
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        ops::conv2d(
            x,
            self.weight.tensor(),
            self.bias.as_ref().map(Parameter::tensor),
            self.stride,
            self.padding,
        )
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        out.push(&self.weight);
        out.extend(self.bias.as_ref());
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        out.push(&mut self.weight);
        out.extend(self.bias.as_mut());
    }
}

#[derive(Debug)]
pub struct BatchNorm2d {
    name: String,
    pub gamma: Parameter,
    pub beta: Parameter,
    running: Mutex<RunningStats>,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Result<Self, TensorError> {
        Ok(Self {
            name: name.to_string(),
            gamma: Parameter::new(format!("{name}.gamma"), vec![1.0; channels], &[channels])?,
            beta: Parameter::new(format!("{name}.beta"), vec![0.0; channels], &[channels])?,
            running: Mutex::new(RunningStats::new(channels)),
        })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor, TensorError> {
        let mut running = self.running.lock().expect("running stats lock poisoned");
        ops::batch_norm(
            x,
            self.gamma.tensor(),
            self.beta.tensor(),
            &mut running,
            mode,
            BN_MOMENTUM,
            BN_EPS,
        )
    }

    pub fn running_stats(&self) -> RunningStats {
        self.running.lock().expect("running stats lock poisoned").clone()
    }

    fn buffers(&self) -> [NamedArray; 2] {
        let stats = self.running_stats();
        let c = stats.mean.len();
        [
            NamedArray::new(format!("{}.running_mean", self.name), vec![c], stats.mean),
            NamedArray::new(format!("{}.running_var", self.name), vec![c], stats.var),
        ]
    }

    fn buffers_mut(&mut self) -> [(String, &mut Vec<f32>); 2] {
        let stats = self.running.get_mut().expect("running stats lock poisoned");
        [
            (format!("{}.running_mean", self.name), &mut stats.mean),
            (format!("{}.running_var", self.name), &mut stats.var),
        ]
    }
}

/// conv3x3-bn-relu, conv3x3-bn, plus a shortcut (identity, or a 1×1
/// projection when the channel count changes), then relu.
#[derive(Debug)]
pub struct ResidualBlock {
    pub conv1: Conv2d,
    pub bn1: BatchNorm2d,
    pub conv2: Conv2d,
    pub bn2: BatchNorm2d,
    pub proj: Option<Conv2d>,
}

impl ResidualBlock {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        Ok(Self {
            conv1: Conv2d::new(&format!("{name}.conv1"), in_channels, out_channels, 3, 1, 1, false, rng)?,
            bn1: BatchNorm2d::new(&format!("{name}.bn1"), out_channels)?,
            conv2: Conv2d::new(&format!("{name}.conv2"), out_channels, out_channels, 3, 1, 1, false, rng)?,
            bn2: BatchNorm2d::new(&format!("{name}.bn2"), out_channels)?,
            proj: if in_channels != out_channels {
                Some(Conv2d::new(&format!("{name}.proj"), in_channels, out_channels, 1, 1, 0, true, rng)?)
            } else {
                None
            },
        })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor, TensorError> {
        let h = ops::relu(&self.bn1.forward(&self.conv1.forward(x)?, mode)?);
        let h = self.bn2.forward(&self.conv2.forward(&h)?, mode)?;
        let shortcut = match &self.proj {
            Some(p) => p.forward(x)?,
            None => x.clone(),
        };
        Ok(ops::relu(&ops::add(&h, &shortcut)?))
    }

    pub(crate) fn params<'a>(&'a self, out: &mut Vec<&'a Parameter>) {
        self.conv1.collect(out);
        out.push(&self.bn1.gamma);
        out.push(&self.bn1.beta);
        self.conv2.collect(out);
        out.push(&self.bn2.gamma);
        out.push(&self.bn2.beta);
        if let Some(p) = &self.proj {
            p.collect(out);
        }
    }

    pub(crate) fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Parameter>) {
        self.conv1.collect_mut(out);
        out.push(&mut self.bn1.gamma);
        out.push(&mut self.bn1.beta);
        self.conv2.collect_mut(out);
        out.push(&mut self.bn2.gamma);
        out.push(&mut self.bn2.beta);
        if let Some(p) = &mut self.proj {
            p.collect_mut(out);
        }
    }

    pub(crate) fn buffers(&self, out: &mut Vec<NamedArray>) {
        out.extend(self.bn1.buffers());
        out.extend(self.bn2.buffers());
    }

    pub(crate) fn buffers_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut Vec<f32>)>) {
        out.extend(self.bn1.buffers_mut());
        out.extend(self.bn2.buffers_mut());
    }
}

pub(crate) fn head_params<'a>(conv: &'a Conv2d, out: &mut Vec<&'a Parameter>) {
    conv.collect(out);
}

pub(crate) fn head_params_mut<'a>(conv: &'a mut Conv2d, out: &mut Vec<&'a mut Parameter>) {
    conv.collect_mut(out);
}

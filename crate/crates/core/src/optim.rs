//! Adam with bias correction.

use crate::error::TensorError;
use crate::tensor::Parameter;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl AdamState {
    /// Defaults: beta1 0.9, beta2 0.999, epsilon 1e-8.
    pub fn new(lr: f32) -> Self {
        Self::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f32, beta1: f32, beta2: f32, epsilon: f32) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f32>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f32>] {
        &self.v
    }

    /// Applies one update using the gradients stored on `params`. A parameter
    /// without a gradient is treated as having a zero gradient. Parameters
    /// are rebuilt as fresh leaves, so gradients start empty afterwards.
    pub fn step(&mut self, params: &mut [&mut Parameter]) -> Result<(), TensorError> {
        let grads: Vec<Vec<f32>> = params
            .iter()
            .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.data().len()]))
            .collect();
        self.apply(params, &grads)
    }

    /// Explicit-gradient form of [`AdamState::step`].
    pub fn apply(&mut self, params: &mut [&mut Parameter], grads: &[Vec<f32>]) -> Result<(), TensorError> {
        if grads.len() != params.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                lhs: vec![params.len()],
                rhs: vec![grads.len()],
            });
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.data().len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                lhs: vec![self.m.len()],
                rhs: vec![params.len()],
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if g.len() != p.data().len() || self.m[i].len() != g.len() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: vec![g.len()],
                });
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - (self.beta1 as f64).powi(t);
        let bc2 = 1.0 - (self.beta2 as f64).powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let mut theta = p.data().to_vec();
            for j in 0..theta.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                let m_hat = m[j] as f64 / bc1;
                let v_hat = v[j] as f64 / bc2;
                theta[j] -= (self.lr as f64 * m_hat / (v_hat.sqrt() + self.epsilon as f64)) as f32;
            }
            p.set_data(theta)?;
        }
        Ok(())
    }
}

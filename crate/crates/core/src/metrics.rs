//! Overlap metrics, the training loss and evaluation reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{MetricError, TensorError};
use crate::mask::BinaryMask;
use crate::tensor::Tensor;

/// Clamp applied to probabilities before taking logs in [`bce_loss`].
pub const BCE_EPS: f32 = 1e-7;

fn overlap(x: &BinaryMask, y: &BinaryMask) -> Result<(usize, usize, usize), MetricError> {
    if (x.width(), x.height()) != (y.width(), y.height()) {
        return Err(MetricError::DimensionMismatch(
            x.width(),
            x.height(),
            y.width(),
            y.height(),
        ));
    }
    let inter = x
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .filter(|(a, b)| **a != 0 && **b != 0)
        .count();
    Ok((inter, x.count_ones(), y.count_ones()))
}

/// `2|X∩Y| / (|X| + |Y|)`; two empty masks score 1.
pub fn dice(x: &BinaryMask, y: &BinaryMask) -> Result<f32, MetricError> {
    let (inter, nx, ny) = overlap(x, y)?;
    if nx + ny == 0 {
        return Ok(1.0);
    }
    Ok((2.0 * inter as f64 / (nx + ny) as f64) as f32)
}

/// `|X∩Y| / |X∪Y|`; two empty masks score 1.
pub fn iou(x: &BinaryMask, y: &BinaryMask) -> Result<f32, MetricError> {
    let (inter, nx, ny) = overlap(x, y)?;
    let union = nx + ny - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok((inter as f64 / union as f64) as f32)
}

/// Mean binary cross-entropy between probabilities `p` and {0,1} targets `y`
/// of identical shape. Probabilities are clamped to `[eps, 1 - eps]` before
/// the logs; the gradient is `(-y/p + (1-y)/(1-p)) / n` at the clamped value.
pub fn bce_loss(p: &Tensor, y: &Tensor) -> Result<Tensor, MetricError> {
    if p.shape() != y.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "bce_loss",
            lhs: p.shape().to_vec(),
            rhs: y.shape().to_vec(),
        }
        .into());
    }
    let n = p.numel().max(1) as f64;
    let clamped: Vec<f32> = p
        .data()
        .iter()
        .map(|&v| v.clamp(BCE_EPS, 1.0 - BCE_EPS))
        .collect();
    let total: f64 = clamped
        .iter()
        .zip(y.data())
        .map(|(&pc, &t)| {
            let (pc, t) = (pc as f64, t as f64);
            -(t * pc.ln() + (1.0 - t) * (1.0 - pc).ln())
        })
        .sum();
    let targets = y.to_vec();
    Ok(Tensor::from_op(
        vec![(total / n) as f32],
        vec![1],
        vec![p.clone()],
        Box::new(move |g| {
            let scale = g[0] as f64 / n;
            let gp = clamped
                .iter()
                .zip(&targets)
                .map(|(&pc, &t)| {
                    let (pc, t) = (pc as f64, t as f64);
                    (scale * (-t / pc + (1.0 - t) / (1.0 - pc))) as f32
                })
                .collect();
            vec![Some(gp)]
        }),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub sample_id: String,
    pub dice: f32,
    pub iou: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_sample: Vec<EvalEntry>,
    pub mean_dice: f32,
    pub mean_iou: f32,
    pub theta: f32,
    pub min_area: usize,
    pub n_samples: usize,
}

/// Unweighted per-sample means.
pub fn aggregate(entries: Vec<EvalEntry>, theta: f32, min_area: usize) -> Result<EvalReport, MetricError> {
    if entries.is_empty() {
        return Err(MetricError::Empty);
    }
    let n = entries.len();
    let mean_dice = entries.iter().map(|e| e.dice as f64).sum::<f64>() / n as f64;
    let mean_iou = entries.iter().map(|e| e.iou as f64).sum::<f64>() / n as f64;
    Ok(EvalReport {
        per_sample: entries,
        mean_dice: mean_dice as f32,
        mean_iou: mean_iou as f32,
        theta,
        min_area,
        n_samples: n,
    })
}

impl EvalReport {
    /// Header `n theta min_area mean_dice mean_iou`, then `id dice iou` per
    /// sample, all reals with six decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {:.6} {} {:.6} {:.6}",
            self.n_samples, self.theta, self.min_area, self.mean_dice, self.mean_iou
        );
        for e in &self.per_sample {
            let _ = writeln!(out, "{} {:.6} {:.6}", e.sample_id, e.dice, e.iou);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

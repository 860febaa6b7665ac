use crate::error::TensorError;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel running mean and variance used in eval mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

/// Batch normalization over N×C×H×W.
///
/// Train mode normalizes with the biased batch variance and folds the
/// unbiased variance into `running` with weight `momentum`. Eval mode
/// normalizes with `running` and leaves it untouched.
pub fn batch_norm(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running: &mut RunningStats,
    mode: Mode,
    momentum: f32,
    eps: f32,
) -> Result<Tensor, TensorError> {
    let &[n, c, h, w] = input.shape() else {
        return Err(TensorError::InvalidArgument {
            op: "batch_norm",
            reason: format!("expected an N×C×H×W tensor, got {:?}", input.shape()),
        });
    };
    for (label, t) in [("gamma", gamma), ("beta", beta)] {
        if t.shape() != [c] {
            return Err(TensorError::ShapeMismatch {
                op: if label == "gamma" { "batch_norm gamma" } else { "batch_norm beta" },
                lhs: t.shape().to_vec(),
                rhs: vec![c],
            });
        }
    }
    if running.mean.len() != c || running.var.len() != c {
        return Err(TensorError::ShapeMismatch {
            op: "batch_norm running stats",
            lhs: vec![running.mean.len(), running.var.len()],
            rhs: vec![c],
        });
    }
    if eps <= 0.0 {
        return Err(TensorError::InvalidArgument {
            op: "batch_norm",
            reason: format!("eps must be positive, got {eps}"),
        });
    }

    let plane = h * w;
    let count = n * plane;
    let x = input.data();
    let channel_values = |ch: usize| {
        (0..n).flat_map(move |b| {
            let base = (b * c + ch) * plane;
            x[base..base + plane].iter().copied()
        })
    };

    let (mean, inv_std): (Vec<f32>, Vec<f32>) = match mode {
        Mode::Train => {
            let mut means = Vec::with_capacity(c);
            let mut inv = Vec::with_capacity(c);
            for ch in 0..c {
                let m = channel_values(ch).map(f64::from).sum::<f64>() / count.max(1) as f64;
                let ss: f64 = channel_values(ch).map(|v| (v as f64 - m).powi(2)).sum();
                let var = ss / count.max(1) as f64;
                let unbiased = if count > 1 { ss / (count - 1) as f64 } else { var };
                running.mean[ch] = (1.0 - momentum) * running.mean[ch] + momentum * m as f32;
                running.var[ch] = (1.0 - momentum) * running.var[ch] + momentum * unbiased as f32;
                means.push(m as f32);
                inv.push((1.0 / (var + eps as f64).sqrt()) as f32);
            }
            (means, inv)
        }
        Mode::Eval => (
            running.mean.clone(),
            running.var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect(),
        ),
    };

    let mut xhat = vec![0.0f32; x.len()];
    let mut out = vec![0.0f32; x.len()];
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * plane;
            let (g, bt) = (gamma.data()[ch], beta.data()[ch]);
            for i in base..base + plane {
                let xh = (x[i] - mean[ch]) * inv_std[ch];
                xhat[i] = xh;
                out[i] = g * xh + bt;
            }
        }
    }

    let gamma_c = gamma.clone();
    let batch_stats = mode == Mode::Train;
    Ok(Tensor::from_op(
        out,
        input.shape().to_vec(),
        vec![input.clone(), gamma.clone(), beta.clone()],
        Box::new(move |g| {
            let mut dgamma = vec![0.0f64; c];
            let mut dbeta = vec![0.0f64; c];
            for b in 0..n {
                for ch in 0..c {
                    let base = (b * c + ch) * plane;
                    for i in base..base + plane {
                        dbeta[ch] += g[i] as f64;
                        dgamma[ch] += (g[i] * xhat[i]) as f64;
                    }
                }
            }
            let mut dx = vec![0.0f32; g.len()];
            let m = count as f32;
            for b in 0..n {
                for ch in 0..c {
                    let base = (b * c + ch) * plane;
                    let scale = gamma_c.data()[ch] * inv_std[ch];
                    if batch_stats {
                        let sum_g = dbeta[ch] as f32;
                        let sum_gx = dgamma[ch] as f32;
                        for i in base..base + plane {
                            dx[i] = scale / m * (m * g[i] - sum_g - xhat[i] * sum_gx);
                        }
                    } else {
                        for i in base..base + plane {
                            dx[i] = scale * g[i];
                        }
                    }
                }
            }
            vec![
                Some(dx),
                Some(dgamma.into_iter().map(|v| v as f32).collect()),
                Some(dbeta.into_iter().map(|v| v as f32).collect()),
            ]
        }),
    ))
}

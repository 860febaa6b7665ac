use crate::error::TensorError;
use crate::tensor::Tensor;

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    same_shape("add", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Ok(Tensor::from_op(
        data,
        a.shape().to_vec(),
        vec![a.clone(), b.clone()],
        Box::new(|g| vec![Some(g.to_vec()), Some(g.to_vec())]),
    ))
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    same_shape("mul", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    let (sa, sb) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        data,
        a.shape().to_vec(),
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            let ga = g.iter().zip(sb.data()).map(|(g, y)| g * y).collect();
            let gb = g.iter().zip(sa.data()).map(|(g, x)| g * x).collect();
            vec![Some(ga), Some(gb)]
        }),
    ))
}

/// Sum of all elements as a `[1]` tensor.
pub fn sum(a: &Tensor) -> Tensor {
    let total: f64 = a.data().iter().map(|&v| v as f64).sum();
    let n = a.numel();
    Tensor::from_op(
        vec![total as f32],
        vec![1],
        vec![a.clone()],
        Box::new(move |g| vec![Some(vec![g[0]; n])]),
    )
}

/// Mean of all elements as a `[1]` tensor.
pub fn mean(a: &Tensor) -> Tensor {
    let n = a.numel().max(1);
    let total: f64 = a.data().iter().map(|&v| v as f64).sum();
    let len = a.numel();
    Tensor::from_op(
        vec![(total / n as f64) as f32],
        vec![1],
        vec![a.clone()],
        Box::new(move |g| vec![Some(vec![g[0] / n as f32; len])]),
    )
}

pub fn relu(a: &Tensor) -> Tensor {
    let data = a.data().iter().map(|&v| v.max(0.0)).collect();
    let src = a.clone();
    Tensor::from_op(
        data,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(move |g| {
            let gx = g
                .iter()
                .zip(src.data())
                .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                .collect();
            vec![Some(gx)]
        }),
    )
}

fn sigmoid_scalar(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logistic sigmoid. Outputs are clamped to the open interval (0, 1) so that
/// saturated logits never produce an exact 0 or 1.
pub fn sigmoid(a: &Tensor) -> Tensor {
    const LO: f32 = f32::MIN_POSITIVE;
    const HI: f32 = 1.0 - f32::EPSILON / 2.0;
    let out: Vec<f32> = a
        .data()
        .iter()
        .map(|&v| sigmoid_scalar(v).clamp(LO, HI))
        .collect();
    let saved = out.clone();
    Tensor::from_op(
        out,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(move |g| {
            let gx = g
                .iter()
                .zip(&saved)
                .map(|(g, s)| g * s * (1.0 - s))
                .collect();
            vec![Some(gx)]
        }),
    )
}

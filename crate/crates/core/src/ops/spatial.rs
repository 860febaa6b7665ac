//! Pooling, upsampling and channel concatenation.

use crate::error::TensorError;
use crate::tensor::Tensor;

fn nchw(op: &'static str, t: &Tensor) -> Result<[usize; 4], TensorError> {
    match *t.shape() {
        [n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(TensorError::InvalidArgument {
            op,
            reason: format!("expected an N×C×H×W tensor, got {:?}", t.shape()),
        }),
    }
}

/// 2×2 max pooling with stride 2. Ties resolve to the first cell in
/// row-major window order, and the gradient flows only to that cell.
pub fn max_pool2(input: &Tensor) -> Result<Tensor, TensorError> {
    let [n, c, h, w] = nchw("max_pool2", input)?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(TensorError::InvalidArgument {
            op: "max_pool2",
            reason: format!("spatial size {h}x{w} must be even"),
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + (2 * oy) * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    let len = input.numel();
    Ok(Tensor::from_op(
        out,
        vec![n, c, oh, ow],
        vec![input.clone()],
        Box::new(move |g| {
            let mut dx = vec![0.0f32; len];
            for (gv, &i) in g.iter().zip(&argmax) {
                dx[i] += gv;
            }
            vec![Some(dx)]
        }),
    ))
}

/// Nearest-neighbour 2× upsampling: each cell becomes a 2×2 block.
pub fn upsample2_nearest(input: &Tensor) -> Result<Tensor, TensorError> {
    let [n, c, h, w] = nchw("upsample2_nearest", input)?;
    let (oh, ow) = (2 * h, 2 * w);
    let x = input.data();
    let mut out = vec![0.0f32; n * c * oh * ow];
    for plane in 0..n * c {
        let src = &x[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                dst[oy * ow + ox] = src[(oy / 2) * w + ox / 2];
            }
        }
    }
    Ok(Tensor::from_op(
        out,
        vec![n, c, oh, ow],
        vec![input.clone()],
        Box::new(move |g| {
            let mut dx = vec![0.0f32; n * c * h * w];
            for plane in 0..n * c {
                let gsrc = &g[plane * oh * ow..(plane + 1) * oh * ow];
                let dst = &mut dx[plane * h * w..(plane + 1) * h * w];
                for oy in 0..oh {
                    for ox in 0..ow {
                        dst[(oy / 2) * w + ox / 2] += gsrc[oy * ow + ox];
                    }
                }
            }
            vec![Some(dx)]
        }),
    ))
}

/// Concatenates along the channel axis: `a` first, then `b`.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    let [n, ca, h, w] = nchw("concat_channels", a)?;
    let [nb, cb, hb, wb] = nchw("concat_channels", b)?;
    if (n, h, w) != (nb, hb, wb) {
        return Err(TensorError::ShapeMismatch {
            op: "concat_channels",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let plane = h * w;
    let (la, lb) = (ca * plane, cb * plane);
    let mut out = Vec::with_capacity(n * (la + lb));
    for i in 0..n {
        out.extend_from_slice(&a.data()[i * la..(i + 1) * la]);
        out.extend_from_slice(&b.data()[i * lb..(i + 1) * lb]);
    }
    Ok(Tensor::from_op(
        out,
        vec![n, ca + cb, h, w],
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            let mut ga = Vec::with_capacity(n * la);
            let mut gb = Vec::with_capacity(n * lb);
            for i in 0..n {
                let chunk = &g[i * (la + lb)..(i + 1) * (la + lb)];
                ga.extend_from_slice(&chunk[..la]);
                gb.extend_from_slice(&chunk[la..]);
            }
            vec![Some(ga), Some(gb)]
        }),
    ))
}

/// Copies channels `[start, end)` out of an N×C×H×W tensor (no gradient).
pub fn slice_channels(t: &Tensor, start: usize, end: usize) -> Result<Tensor, TensorError> {
    let [n, c, h, w] = nchw("slice_channels", t)?;
    if start > end || end > c {
        return Err(TensorError::InvalidArgument {
            op: "slice_channels",
            reason: format!("range {start}..{end} outside {c} channels"),
        });
    }
    let plane = h * w;
    let mut out = Vec::with_capacity(n * (end - start) * plane);
    for i in 0..n {
        let base = i * c * plane;
        out.extend_from_slice(&t.data()[base + start * plane..base + end * plane]);
    }
    Tensor::new(out, &[n, end - start, h, w])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: Vec<f32>, shape: &[usize]) -> Tensor {
        Tensor::new(data, shape).unwrap()
    }

    #[test]
    fn pool_small_cases() {
        let y = max_pool2(&t(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2])).unwrap();
        assert_eq!(y.data(), &[4.0]);

        let y = max_pool2(&Tensor::full(&[1, 2, 4, 6], 0.25)).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 3]);
        assert!(y.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn pool_sixteen_values() {
        let x: Vec<f32> = (1..=16).map(|v| v as f32).collect();
        // window-max oracle
        let mut expected = vec![];
        for oy in 0..2 {
            for ox in 0..2 {
                let mut m = f32::MIN;
                for dy in 0..2 {
                    for dx in 0..2 {
                        m = m.max(x[(2 * oy + dy) * 4 + 2 * ox + dx]);
                    }
                }
                expected.push(m);
            }
        }
        assert_eq!(expected, vec![6.0, 8.0, 14.0, 16.0]);
        let y = max_pool2(&t(x, &[1, 1, 4, 4])).unwrap();
        assert_eq!(y.data(), &expected[..]);
    }

    #[test]
    fn pool_ties_route_to_first_cell() {
        let x = Tensor::parameter(vec![2.0; 4], &[1, 1, 2, 2]).unwrap();
        let y = max_pool2(&x).unwrap();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn pool_rejects_odd() {
        assert!(max_pool2(&Tensor::zeros(&[1, 1, 3, 4])).is_err());
        assert!(max_pool2(&Tensor::zeros(&[1, 1, 4, 5])).is_err());
    }

    #[test]
    fn upsample_replicates() {
        let y = upsample2_nearest(&t(vec![5.0], &[1, 1, 1, 1])).unwrap();
        assert_eq!(y.data(), &[5.0; 4]);
        let y = upsample2_nearest(&t(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2])).unwrap();
        #[rustfmt::skip]
        let expected = [
            1.0, 1.0, 2.0, 2.0,
            1.0, 1.0, 2.0, 2.0,
            3.0, 3.0, 4.0, 4.0,
            3.0, 3.0, 4.0, 4.0,
        ];
        assert_eq!(y.data(), &expected);
        let y = upsample2_nearest(&Tensor::zeros(&[1, 4, 16, 16])).unwrap();
        assert_eq!(y.shape(), &[1, 4, 32, 32]);
    }

    #[test]
    fn concat_shapes_and_slices() {
        let a = t((0..2 * 2 * 3 * 2).map(|v| v as f32).collect(), &[2, 2, 3, 2]);
        let b = t((0..2 * 3 * 3 * 2).map(|v| -(v as f32)).collect(), &[2, 3, 3, 2]);
        let y = concat_channels(&a, &b).unwrap();
        assert_eq!(y.shape(), &[2, 5, 3, 2]);
        assert_eq!(slice_channels(&y, 0, 2).unwrap().data(), a.data());
        assert_eq!(slice_channels(&y, 2, 5).unwrap().data(), b.data());

        let empty = Tensor::zeros(&[2, 0, 3, 2]);
        let same = concat_channels(&a, &empty).unwrap();
        assert_eq!(same.shape(), a.shape());
        assert_eq!(same.data(), a.data());
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = Tensor::zeros(&[1, 1, 4, 4]);
        let b = Tensor::zeros(&[1, 1, 4, 2]);
        assert!(concat_channels(&a, &b).is_err());
    }
}

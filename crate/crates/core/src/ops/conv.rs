//! 2-D convolution via im2col + sgemm.

use crate::error::TensorError;
use crate::tensor::Tensor;

/// `c = a · b + beta · c` for row-major matrices. `a` is m×k (or k×m when
/// `trans_a`), `b` is k×n (or n×k when `trans_b`), `c` is m×n.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    trans_a: bool,
    b: &[f32],
    trans_b: bool,
    beta: f32,
    c: &mut [f32],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every index reached through the
    // given strides lies within the slices.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Maps output coordinate + kernel offset to an input coordinate.
    #[inline]
    fn source(&self, out: usize, offset: usize, limit: usize) -> Option<usize> {
        let pos = (out * self.stride + offset) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }
}

fn im2col(x: &[f32], g: &Geometry, cols: &mut [f32]) {
    let p = g.col_cols();
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    match g.source(oy, ki, g.height) {
                        None => line.fill(0.0),
                        Some(iy) => {
                            let src = &plane[iy * g.width..(iy + 1) * g.width];
                            for (ox, v) in line.iter_mut().enumerate() {
                                *v = g.source(ox, kj, g.width).map_or(0.0, |ix| src[ix]);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f32], g: &Geometry, dx: &mut [f32]) {
    let p = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut dx[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let Some(iy) = g.source(oy, ki, g.height) else { continue };
                    for ox in 0..g.out_w {
                        if let Some(ix) = g.source(ox, kj, g.width) {
                            plane[iy * g.width + ix] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Convolution of an N×C_in×H×W input with a C_out×C_in×k×k kernel.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor, TensorError> {
    let mismatch = || TensorError::ShapeMismatch {
        op: "conv2d",
        lhs: input.shape().to_vec(),
        rhs: weight.shape().to_vec(),
    };
    let &[n, c_in, h, w] = input.shape() else {
        return Err(mismatch());
    };
    let &[c_out, wc, kh, kw] = weight.shape() else {
        return Err(mismatch());
    };
    if wc != c_in || kh != kw {
        return Err(mismatch());
    }
    if kh == 0 || stride == 0 {
        return Err(TensorError::InvalidArgument {
            op: "conv2d",
            reason: format!("kernel {kh} and stride {stride} must be >= 1"),
        });
    }
    if h + 2 * padding < kh || w + 2 * padding < kw {
        return Err(mismatch());
    }
    if let Some(b) = bias {
        if b.shape() != [c_out] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d bias",
                lhs: b.shape().to_vec(),
                rhs: vec![c_out],
            });
        }
    }

    let g = Geometry {
        channels: c_in,
        height: h,
        width: w,
        kernel: kh,
        stride,
        padding,
        out_h: (h + 2 * padding - kh) / stride + 1,
        out_w: (w + 2 * padding - kw) / stride + 1,
    };
    let (rows, p) = (g.col_rows(), g.col_cols());
    let in_len = c_in * h * w;
    let out_len = c_out * p;

    let mut out = vec![0.0f32; n * out_len];
    let mut cols = vec![0.0f32; rows * p];
    for b in 0..n {
        im2col(&input.data()[b * in_len..(b + 1) * in_len], &g, &mut cols);
        let dst = &mut out[b * out_len..(b + 1) * out_len];
        gemm(c_out, rows, p, weight.data(), false, &cols, false, 0.0, dst);
        if let Some(bias) = bias {
            for (co, chunk) in dst.chunks_mut(p).enumerate() {
                let bv = bias.data()[co];
                chunk.iter_mut().for_each(|v| *v += bv);
            }
        }
    }

    let mut parents = vec![input.clone(), weight.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    let (x, wt) = (input.clone(), weight.clone());
    let has_bias = bias.is_some();
    Ok(Tensor::from_op(
        out,
        vec![n, c_out, g.out_h, g.out_w],
        parents,
        Box::new(move |grad| {
            let mut dx = x.requires_grad().then(|| vec![0.0f32; n * in_len]);
            let mut dw = wt.requires_grad().then(|| vec![0.0f32; c_out * rows]);
            let mut cols = vec![0.0f32; rows * p];
            let mut dcols = vec![0.0f32; rows * p];
            for b in 0..n {
                let gb = &grad[b * out_len..(b + 1) * out_len];
                if let Some(dw) = dw.as_mut() {
                    im2col(&x.data()[b * in_len..(b + 1) * in_len], &g, &mut cols);
                    gemm(c_out, p, rows, gb, false, &cols, true, 1.0, dw);
                }
                if let Some(dx) = dx.as_mut() {
                    gemm(rows, c_out, p, wt.data(), true, gb, false, 0.0, &mut dcols);
                    col2im(&dcols, &g, &mut dx[b * in_len..(b + 1) * in_len]);
                }
            }
            let mut result = vec![dx, dw];
            if has_bias {
                let mut db = vec![0.0f32; c_out];
                for b in 0..n {
                    let gb = &grad[b * out_len..(b + 1) * out_len];
                    for (co, chunk) in gb.chunks(p).enumerate() {
                        db[co] += chunk.iter().sum::<f32>();
                    }
                }
                result.push(Some(db));
            }
            result
        }),
    ))
}

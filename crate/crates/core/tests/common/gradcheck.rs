//! Finite-difference gradient checks. Each case pairs an autodiff op with an
//! independent f64 reference of its forward pass; the analytic gradient of
//! `sum(w * op(x))` for random `w` is compared to central differences of
//! the reference.

use pneumoseg::metrics::bce_loss;
use pneumoseg::ops::{self, Mode, RunningStats};
use pneumoseg::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-3;
pub const REL_TOL: f64 = 1e-3;
/// Denominator floor: gradients smaller than this are compared absolutely
/// at `REL_TOL * FLOOR`.
pub const FLOOR: f64 = 1e-2;
pub const BN_EPS: f64 = 1e-5;

pub struct Input {
    pub data: Vec<f64>,
    pub shape: Vec<usize>,
    pub grad: bool,
}

impl Input {
    /// Values are rounded through f32 so the reference sees exactly what the
    /// tensor holds.
    fn new(data: Vec<f64>, shape: &[usize], grad: bool) -> Self {
        Self {
            data: data.into_iter().map(|v| v as f32 as f64).collect(),
            shape: shape.to_vec(),
            grad,
        }
    }
}

type Build = Box<dyn Fn(&[Tensor]) -> Tensor>;
type Reference = Box<dyn Fn(&[Vec<f64>]) -> Vec<f64>>;

pub struct Case {
    pub inputs: Vec<Input>,
    pub build: Build,
    pub reference: Reference,
}

#[derive(Debug, Clone)]
pub struct OpReport {
    pub op: &'static str,
    pub instances: usize,
    pub checked: usize,
    pub max_rel: f64,
    pub max_forward: f64,
}

impl OpReport {
    pub fn passed(&self) -> bool {
        self.max_rel < REL_TOL && self.max_forward < 1e-4 && self.checked > 0
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Values bounded away from zero by more than the finite-difference step.
fn away_from_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let mag = rng.random_range(0.01..1.0);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

/// Pairwise distinct values, at least 0.03 apart.
fn distinct(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.031 - 0.5).collect();
    v.shuffle(rng);
    v
}

/// Returns (max relative gradient error, max forward error, elements checked).
pub fn run_case(case: &Case, rng: &mut ChaCha8Rng) -> (f64, f64, usize) {
    let tensors: Vec<Tensor> = case
        .inputs
        .iter()
        .map(|i| {
            let data: Vec<f32> = i.data.iter().map(|&v| v as f32).collect();
            if i.grad {
                Tensor::parameter(data, &i.shape).unwrap()
            } else {
                Tensor::new(data, &i.shape).unwrap()
            }
        })
        .collect();
    let out = (case.build)(&tensors);
    let base: Vec<Vec<f64>> = case.inputs.iter().map(|i| i.data.clone()).collect();
    let expected = (case.reference)(&base);
    assert_eq!(out.numel(), expected.len(), "reference and op disagree on output size");
    let max_forward = out
        .data()
        .iter()
        .zip(&expected)
        .map(|(&a, &e)| (a as f64 - e).abs() / e.abs().max(1.0))
        .fold(0.0, f64::max);

    let w: Vec<f64> = uniform(rng, expected.len(), -1.0, 1.0)
        .into_iter()
        .map(|v| v as f32 as f64)
        .collect();
    let seed: Vec<f32> = w.iter().map(|&v| v as f32).collect();
    out.backward_with(&seed).unwrap();
    let objective = |inputs: &[Vec<f64>]| -> f64 {
        (case.reference)(inputs).iter().zip(&w).map(|(y, w)| y * w).sum()
    };

    let mut max_rel = 0.0f64;
    let mut checked = 0;
    for (i, input) in case.inputs.iter().enumerate() {
        if !input.grad {
            continue;
        }
        let analytic = tensors[i].grad().unwrap_or_else(|| vec![0.0; input.data.len()]);
        for j in 0..input.data.len() {
            let mut plus = base.clone();
            plus[i][j] += STEP;
            let mut minus = base.clone();
            minus[i][j] -= STEP;
            let numeric = (objective(&plus) - objective(&minus)) / (2.0 * STEP);
            let a = analytic[j] as f64;
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            max_rel = max_rel.max(rel);
            checked += 1;
        }
    }
    (max_rel, max_forward, checked)
}

fn conv_case(rng: &mut ChaCha8Rng) -> Case {
    let n = rng.random_range(1..=2);
    let cin = rng.random_range(1..=3);
    let cout = rng.random_range(1..=3);
    let k = if rng.random_bool(0.7) { 3 } else { 1 };
    let stride = rng.random_range(1..=2);
    let pad = if k == 3 { rng.random_range(0..=1) } else { 0 };
    let h = rng.random_range(3..=6);
    let w = rng.random_range(3..=6);
    let bias = rng.random_bool(0.7);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut inputs = vec![
        Input::new(uniform(rng, n * cin * h * w, -1.0, 1.0), &[n, cin, h, w], true),
        Input::new(uniform(rng, cout * cin * k * k, -1.0, 1.0), &[cout, cin, k, k], true),
    ];
    if bias {
        inputs.push(Input::new(uniform(rng, cout, -0.5, 0.5), &[cout], true));
    }
    Case {
        inputs,
        build: Box::new(move |t| ops::conv2d(&t[0], &t[1], t.get(2), stride, pad).unwrap()),
        reference: Box::new(move |v| {
            let (x, wt) = (&v[0], &v[1]);
            let mut out = vec![0.0; n * cout * oh * ow];
            for b in 0..n {
                for co in 0..cout {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = if bias { v[2][co] } else { 0.0 };
                            for ci in 0..cin {
                                for ki in 0..k {
                                    for kj in 0..k {
                                        let iy = (oy * stride + ki) as isize - pad as isize;
                                        let ix = (ox * stride + kj) as isize - pad as isize;
                                        if iy < 0 || ix < 0 || iy as usize >= h || ix as usize >= w {
                                            continue;
                                        }
                                        acc += x[((b * cin + ci) * h + iy as usize) * w + ix as usize]
                                            * wt[((co * cin + ci) * k + ki) * k + kj];
                                    }
                                }
                            }
                            out[((b * cout + co) * oh + oy) * ow + ox] = acc;
                        }
                    }
                }
            }
            out
        }),
    }
}

fn pool_case(rng: &mut ChaCha8Rng) -> Case {
    let (n, c) = (rng.random_range(1..=2), rng.random_range(1..=2));
    let h = 2 * rng.random_range(1..=3);
    let w = 2 * rng.random_range(1..=3);
    Case {
        inputs: vec![Input::new(distinct(rng, n * c * h * w), &[n, c, h, w], true)],
        build: Box::new(|t| ops::max_pool2(&t[0]).unwrap()),
        reference: Box::new(move |v| {
            let (oh, ow) = (h / 2, w / 2);
            let mut out = Vec::with_capacity(n * c * oh * ow);
            for p in 0..n * c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let at = |dy: usize, dx: usize| v[0][(p * h + 2 * oy + dy) * w + 2 * ox + dx];
                        out.push(at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1)));
                    }
                }
            }
            out
        }),
    }
}

fn upsample_case(rng: &mut ChaCha8Rng) -> Case {
    let (n, c, h, w) = (
        rng.random_range(1..=2),
        rng.random_range(1..=2),
        rng.random_range(1..=4),
        rng.random_range(1..=4),
    );
    Case {
        inputs: vec![Input::new(uniform(rng, n * c * h * w, -1.0, 1.0), &[n, c, h, w], true)],
        build: Box::new(|t| ops::upsample2_nearest(&t[0]).unwrap()),
        reference: Box::new(move |v| {
            let mut out = Vec::with_capacity(n * c * 4 * h * w);
            for p in 0..n * c {
                for y in 0..2 * h {
                    for x in 0..2 * w {
                        out.push(v[0][(p * h + y / 2) * w + x / 2]);
                    }
                }
            }
            out
        }),
    }
}

fn concat_case(rng: &mut ChaCha8Rng) -> Case {
    let (n, ca, cb, h, w) = (
        rng.random_range(1..=2),
        rng.random_range(1..=3),
        rng.random_range(1..=3),
        rng.random_range(1..=3),
        rng.random_range(1..=3),
    );
    Case {
        inputs: vec![
            Input::new(uniform(rng, n * ca * h * w, -1.0, 1.0), &[n, ca, h, w], true),
            Input::new(uniform(rng, n * cb * h * w, -1.0, 1.0), &[n, cb, h, w], true),
        ],
        build: Box::new(|t| ops::concat_channels(&t[0], &t[1]).unwrap()),
        reference: Box::new(move |v| {
            let plane = h * w;
            let mut out = Vec::new();
            for b in 0..n {
                out.extend_from_slice(&v[0][b * ca * plane..(b + 1) * ca * plane]);
                out.extend_from_slice(&v[1][b * cb * plane..(b + 1) * cb * plane]);
            }
            out
        }),
    }
}

fn bn_reference(x: &[f64], gamma: &[f64], beta: &[f64], mean: &[f64], var: &[f64], n: usize, c: usize, plane: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for ch in 0..c {
            let inv = 1.0 / (var[ch] + BN_EPS).sqrt();
            for i in 0..plane {
                let k = (b * c + ch) * plane + i;
                out[k] = gamma[ch] * (x[k] - mean[ch]) * inv + beta[ch];
            }
        }
    }
    out
}

fn bn_case(rng: &mut ChaCha8Rng, mode: Mode) -> Case {
    let (n, c, h, w) = (
        rng.random_range(2..=3),
        rng.random_range(1..=3),
        rng.random_range(2..=3),
        rng.random_range(2..=3),
    );
    let plane = h * w;
    let running_mean = uniform(rng, c, -0.5, 0.5);
    let running_var = uniform(rng, c, 0.5, 2.0);
    let stats_f32 = RunningStats {
        mean: running_mean.iter().map(|&v| v as f32).collect(),
        var: running_var.iter().map(|&v| v as f32).collect(),
    };
    let (rm, rv): (Vec<f64>, Vec<f64>) = (
        stats_f32.mean.iter().map(|&v| v as f64).collect(),
        stats_f32.var.iter().map(|&v| v as f64).collect(),
    );
    Case {
        inputs: vec![
            Input::new(uniform(rng, n * c * plane, -1.0, 1.0), &[n, c, h, w], true),
            Input::new(uniform(rng, c, 0.5, 1.5), &[c], true),
            Input::new(uniform(rng, c, -0.5, 0.5), &[c], true),
        ],
        build: Box::new(move |t| {
            let mut stats = stats_f32.clone();
            ops::batch_norm(&t[0], &t[1], &t[2], &mut stats, mode, 0.1, BN_EPS as f32).unwrap()
        }),
        reference: Box::new(move |v| match mode {
            Mode::Eval => bn_reference(&v[0], &v[1], &v[2], &rm, &rv, n, c, plane),
            Mode::Train => {
                let count = (n * plane) as f64;
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for b in 0..n {
                    for ch in 0..c {
                        for i in 0..plane {
                            mean[ch] += v[0][(b * c + ch) * plane + i] / count;
                        }
                    }
                }
                for b in 0..n {
                    for ch in 0..c {
                        for i in 0..plane {
                            var[ch] += (v[0][(b * c + ch) * plane + i] - mean[ch]).powi(2) / count;
                        }
                    }
                }
                bn_reference(&v[0], &v[1], &v[2], &mean, &var, n, c, plane)
            }
        }),
    }
}

fn random_shape(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let rank = rng.random_range(1..=4);
    (0..rank).map(|_| rng.random_range(1..=4)).collect()
}

fn unary_case(
    rng: &mut ChaCha8Rng,
    data: fn(&mut ChaCha8Rng, usize) -> Vec<f64>,
    build: fn(&Tensor) -> Tensor,
    f: fn(f64) -> f64,
) -> Case {
    let shape = random_shape(rng);
    let len = shape.iter().product();
    Case {
        inputs: vec![Input::new(data(rng, len), &shape, true)],
        build: Box::new(move |t| build(&t[0])),
        reference: Box::new(move |v| v[0].iter().map(|&x| f(x)).collect()),
    }
}

fn binary_case(rng: &mut ChaCha8Rng, build: fn(&Tensor, &Tensor) -> Tensor, f: fn(f64, f64) -> f64) -> Case {
    let shape = random_shape(rng);
    let len: usize = shape.iter().product();
    Case {
        inputs: vec![
            Input::new(uniform(rng, len, -1.0, 1.0), &shape, true),
            Input::new(uniform(rng, len, -1.0, 1.0), &shape, true),
        ],
        build: Box::new(move |t| build(&t[0], &t[1])),
        reference: Box::new(move |v| v[0].iter().zip(&v[1]).map(|(&a, &b)| f(a, b)).collect()),
    }
}

fn reduce_case(rng: &mut ChaCha8Rng, build: fn(&Tensor) -> Tensor, average: bool) -> Case {
    let shape = random_shape(rng);
    let len: usize = shape.iter().product();
    Case {
        inputs: vec![Input::new(uniform(rng, len, -1.0, 1.0), &shape, true)],
        build: Box::new(move |t| build(&t[0])),
        reference: Box::new(move |v| {
            let s: f64 = v[0].iter().sum();
            vec![if average { s / v[0].len() as f64 } else { s }]
        }),
    }
}

fn reshape_case(rng: &mut ChaCha8Rng) -> Case {
    let (a, b) = (rng.random_range(1..=4), rng.random_range(1..=4));
    Case {
        inputs: vec![Input::new(uniform(rng, a * b * 2, -1.0, 1.0), &[a, b, 2], true)],
        build: Box::new(move |t| t[0].reshape(&[2 * a * b]).unwrap()),
        reference: Box::new(|v| v[0].clone()),
    }
}

fn bce_case(rng: &mut ChaCha8Rng) -> Case {
    let shape = random_shape(rng);
    let len: usize = shape.iter().product();
    let targets: Vec<f64> = (0..len).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
    Case {
        inputs: vec![
            Input::new(uniform(rng, len, 0.05, 0.95), &shape, true),
            Input::new(targets, &shape, false),
        ],
        build: Box::new(|t| bce_loss(&t[0], &t[1]).unwrap()),
        reference: Box::new(|v| {
            let n = v[0].len() as f64;
            let total: f64 = v[0]
                .iter()
                .zip(&v[1])
                .map(|(&p, &y)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
                .sum();
            vec![total / n]
        }),
    }
}

type CaseGen = fn(&mut ChaCha8Rng) -> Case;

pub fn cases() -> Vec<(&'static str, CaseGen)> {
    vec![
        ("conv2d", conv_case),
        ("max_pool2", pool_case),
        ("upsample2_nearest", upsample_case),
        ("concat_channels", concat_case),
        ("batch_norm_train", |r| bn_case(r, Mode::Train)),
        ("batch_norm_eval", |r| bn_case(r, Mode::Eval)),
        ("relu", |r| unary_case(r, away_from_zero, ops::relu, |x| x.max(0.0))),
        ("sigmoid", |r| {
            unary_case(r, |r, n| uniform(r, n, -4.0, 4.0), ops::sigmoid, |x| 1.0 / (1.0 + (-x).exp()))
        }),
        ("add", |r| binary_case(r, |a, b| ops::add(a, b).unwrap(), |a, b| a + b)),
        ("mul", |r| binary_case(r, |a, b| ops::mul(a, b).unwrap(), |a, b| a * b)),
        ("sum", |r| reduce_case(r, ops::sum, false)),
        ("mean", |r| reduce_case(r, ops::mean, true)),
        ("reshape", reshape_case),
        ("bce_loss", bce_case),
    ]
}

pub fn gradient_suite(seed: u64, instances: usize) -> Vec<OpReport> {
    cases()
        .into_iter()
        .enumerate()
        .map(|(k, (op, make))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let mut report = OpReport {
                op,
                instances,
                checked: 0,
                max_rel: 0.0,
                max_forward: 0.0,
            };
            for _ in 0..instances {
                let case = make(&mut rng);
                let (rel, fwd, checked) = run_case(&case, &mut rng);
                report.max_rel = report.max_rel.max(rel);
                report.max_forward = report.max_forward.max(fwd);
                report.checked += checked;
            }
            report
        })
        .collect()
}

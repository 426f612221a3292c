use std::rc::Rc;

use crate::kernels::{self, ConvGeom};
use crate::tensor::Tensor;

/// Kind of a recorded operation, without its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale,
    AddScalar,
    MatMul,
    Transpose,
    Conv2d,
    Conv2dInputGrad,
    Conv2dWeightGrad,
    AddBias,
    SumToAxis,
    BroadcastAxis,
    Relu,
    Step,
    Sigmoid,
    AvgPool2d,
    AvgPool2dGrad,
    Reshape,
    Sum,
    Mean,
    Expand,
    MaxLastAxis,
    PickLastAxis,
    ScatterLastAxis,
    Softmax,
    RowSum,
    SoftmaxCrossEntropy,
    Mse,
    GatherRows,
    ScatterRows,
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale(f64),
    AddScalar(f64),
    MatMul,
    Transpose,
    Conv2d,
    Conv2dInputGrad { h: usize, w: usize },
    Conv2dWeightGrad { kh: usize, kw: usize },
    AddBias { axis: usize },
    SumToAxis { axis: usize },
    BroadcastAxis { axis: usize, shape: Vec<usize> },
    Relu,
    Step,
    Sigmoid,
    AvgPool2d { k: usize },
    AvgPool2dGrad { k: usize, h: usize, w: usize },
    Reshape(Vec<usize>),
    Sum,
    Mean,
    Expand(Vec<usize>),
    MaxLastAxis,
    PickLastAxis(Rc<[usize]>),
    ScatterLastAxis { indices: Rc<[usize]>, width: usize },
    Softmax,
    RowSum,
    SoftmaxCrossEntropy(Rc<[usize]>),
    Mse,
    GatherRows(Rc<[usize]>),
    ScatterRows { rows: Rc<[usize]>, n: usize },
}

type EvalResult = std::result::Result<Tensor, String>;

fn same_shape(a: &Tensor, b: &Tensor) -> std::result::Result<(), String> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(format!("{:?} vs {:?}", a.shape(), b.shape()))
    }
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> EvalResult {
    same_shape(a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Ok(Tensor::from_parts(a.shape().to_vec(), data))
}

fn rank(t: &Tensor, r: usize) -> std::result::Result<(), String> {
    if t.rank() == r {
        Ok(())
    } else {
        Err(format!("expected rank {r}, got shape {:?}", t.shape()))
    }
}

fn axis_layout(shape: &[usize], axis: usize) -> std::result::Result<(usize, usize), String> {
    if axis >= shape.len() {
        return Err(format!("axis {axis} out of range for {shape:?}"));
    }
    let inner: usize = shape[axis + 1..].iter().product();
    Ok((shape[axis], inner))
}

fn check_indices(indices: &[usize], bound: usize) -> std::result::Result<(), String> {
    match indices.iter().find(|&&i| i >= bound) {
        Some(i) => Err(format!("index {i} out of range {bound}")),
        None => Ok(()),
    }
}

impl Op {
    pub fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Add => OpKind::Add,
            Op::Sub => OpKind::Sub,
            Op::Mul => OpKind::Mul,
            Op::Scale(_) => OpKind::Scale,
            Op::AddScalar(_) => OpKind::AddScalar,
            Op::MatMul => OpKind::MatMul,
            Op::Transpose => OpKind::Transpose,
            Op::Conv2d => OpKind::Conv2d,
            Op::Conv2dInputGrad { .. } => OpKind::Conv2dInputGrad,
            Op::Conv2dWeightGrad { .. } => OpKind::Conv2dWeightGrad,
            Op::AddBias { .. } => OpKind::AddBias,
            Op::SumToAxis { .. } => OpKind::SumToAxis,
            Op::BroadcastAxis { .. } => OpKind::BroadcastAxis,
            Op::Relu => OpKind::Relu,
            Op::Step => OpKind::Step,
            Op::Sigmoid => OpKind::Sigmoid,
            Op::AvgPool2d { .. } => OpKind::AvgPool2d,
            Op::AvgPool2dGrad { .. } => OpKind::AvgPool2dGrad,
            Op::Reshape(_) => OpKind::Reshape,
            Op::Sum => OpKind::Sum,
            Op::Mean => OpKind::Mean,
            Op::Expand(_) => OpKind::Expand,
            Op::MaxLastAxis => OpKind::MaxLastAxis,
            Op::PickLastAxis(_) => OpKind::PickLastAxis,
            Op::ScatterLastAxis { .. } => OpKind::ScatterLastAxis,
            Op::Softmax => OpKind::Softmax,
            Op::RowSum => OpKind::RowSum,
            Op::SoftmaxCrossEntropy(_) => OpKind::SoftmaxCrossEntropy,
            Op::Mse => OpKind::Mse,
            Op::GatherRows(_) => OpKind::GatherRows,
            Op::ScatterRows { .. } => OpKind::ScatterRows,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind() {
            OpKind::Leaf => "leaf",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::AddScalar => "add_scalar",
            OpKind::MatMul => "matmul",
            OpKind::Transpose => "transpose",
            OpKind::Conv2d => "conv2d",
            OpKind::Conv2dInputGrad => "conv2d_input_grad",
            OpKind::Conv2dWeightGrad => "conv2d_weight_grad",
            OpKind::AddBias => "add_bias",
            OpKind::SumToAxis => "sum_to_axis",
            OpKind::BroadcastAxis => "broadcast_axis",
            OpKind::Relu => "relu",
            OpKind::Step => "step",
            OpKind::Sigmoid => "sigmoid",
            OpKind::AvgPool2d => "avgpool2d",
            OpKind::AvgPool2dGrad => "avgpool2d_grad",
            OpKind::Reshape => "reshape",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Expand => "expand",
            OpKind::MaxLastAxis => "max_last_axis",
            OpKind::PickLastAxis => "pick_last_axis",
            OpKind::ScatterLastAxis => "scatter_last_axis",
            OpKind::Softmax => "softmax",
            OpKind::RowSum => "row_sum",
            OpKind::SoftmaxCrossEntropy => "softmax_cross_entropy",
            OpKind::Mse => "mse",
            OpKind::GatherRows => "gather_rows",
            OpKind::ScatterRows => "scatter_rows",
        }
    }

    /// Forward rule. `x` holds the input values in recorded order.
    pub fn eval(&self, x: &[&Tensor]) -> EvalResult {
        match self {
            Op::Leaf => unreachable!("leaves are bound, not evaluated"),
            Op::Add => zip_with(x[0], x[1], |a, b| a + b),
            Op::Sub => zip_with(x[0], x[1], |a, b| a - b),
            Op::Mul => zip_with(x[0], x[1], |a, b| a * b),
            Op::Scale(c) => Ok(x[0].map(|v| v * c)),
            Op::AddScalar(c) => Ok(x[0].map(|v| v + c)),
            Op::MatMul => {
                let (a, b) = (x[0], x[1]);
                rank(a, 2)?;
                rank(b, 2)?;
                let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                if b.shape()[0] != k {
                    return Err(format!("{:?} x {:?}", a.shape(), b.shape()));
                }
                let mut out = vec![0.0; m * n];
                kernels::gemm(m, k, n, a.data(), false, b.data(), false, 0.0, &mut out);
                Ok(Tensor::from_parts(vec![m, n], out))
            }
            Op::Transpose => {
                rank(x[0], 2)?;
                let (r, c) = (x[0].shape()[0], x[0].shape()[1]);
                Ok(Tensor::from_parts(
                    vec![c, r],
                    kernels::transpose2d(r, c, x[0].data()),
                ))
            }
            Op::Conv2d => {
                let (input, kernel) = (x[0], x[1]);
                rank(input, 4)?;
                rank(kernel, 4)?;
                let (s, k) = (input.shape(), kernel.shape());
                if s[1] != k[1] || k[2] > s[2] || k[3] > s[3] {
                    return Err(format!("input {s:?} with kernel {k:?}"));
                }
                let g = ConvGeom {
                    batch: s[0],
                    in_ch: s[1],
                    out_ch: k[0],
                    h: s[2],
                    w: s[3],
                    kh: k[2],
                    kw: k[3],
                };
                let out = kernels::conv2d(&g, input.data(), kernel.data());
                Ok(Tensor::from_parts(
                    vec![g.batch, g.out_ch, g.oh(), g.ow()],
                    out,
                ))
            }
            Op::Conv2dInputGrad { h, w } => {
                let (grad, kernel) = (x[0], x[1]);
                rank(grad, 4)?;
                rank(kernel, 4)?;
                let (s, k) = (grad.shape(), kernel.shape());
                if s[1] != k[0] || k[2] > *h || k[3] > *w || s[2] != h - k[2] + 1 || s[3] != w - k[3] + 1
                {
                    return Err(format!("grad {s:?} with kernel {k:?} for {h}x{w}"));
                }
                let g = ConvGeom {
                    batch: s[0],
                    in_ch: k[1],
                    out_ch: k[0],
                    h: *h,
                    w: *w,
                    kh: k[2],
                    kw: k[3],
                };
                let out = kernels::conv2d_input_grad(&g, grad.data(), kernel.data());
                Ok(Tensor::from_parts(vec![g.batch, g.in_ch, *h, *w], out))
            }
            Op::Conv2dWeightGrad { kh, kw } => {
                let (input, grad) = (x[0], x[1]);
                rank(input, 4)?;
                rank(grad, 4)?;
                let (s, gs) = (input.shape(), grad.shape());
                if s[0] != gs[0] || *kh > s[2] || *kw > s[3] || gs[2] != s[2] - kh + 1 || gs[3] != s[3] - kw + 1
                {
                    return Err(format!("input {s:?} with grad {gs:?} for kernel {kh}x{kw}"));
                }
                let g = ConvGeom {
                    batch: s[0],
                    in_ch: s[1],
                    out_ch: gs[1],
                    h: s[2],
                    w: s[3],
                    kh: *kh,
                    kw: *kw,
                };
                let out = kernels::conv2d_weight_grad(&g, input.data(), grad.data());
                Ok(Tensor::from_parts(vec![g.out_ch, g.in_ch, *kh, *kw], out))
            }
            Op::AddBias { axis } => {
                let (input, bias) = (x[0], x[1]);
                let (dim, inner) = axis_layout(input.shape(), *axis)?;
                if bias.shape() != [dim] {
                    return Err(format!("bias {:?} for axis of {dim}", bias.shape()));
                }
                let b = bias.data();
                let data = input
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v + b[(i / inner) % dim])
                    .collect();
                Ok(Tensor::from_parts(input.shape().to_vec(), data))
            }
            Op::SumToAxis { axis } => {
                let (dim, inner) = axis_layout(x[0].shape(), *axis)?;
                let mut out = vec![0.0; dim];
                for (i, v) in x[0].data().iter().enumerate() {
                    out[(i / inner) % dim] += v;
                }
                Ok(Tensor::from_parts(vec![dim], out))
            }
            Op::BroadcastAxis { axis, shape } => {
                let (dim, inner) = axis_layout(shape, *axis)?;
                if x[0].shape() != [dim] {
                    return Err(format!("{:?} onto axis {axis} of {shape:?}", x[0].shape()));
                }
                let b = x[0].data();
                let n: usize = shape.iter().product();
                let data = (0..n).map(|i| b[(i / inner) % dim]).collect();
                Ok(Tensor::from_parts(shape.clone(), data))
            }
            Op::Relu => Ok(x[0].map(|v| if v > 0.0 { v } else { 0.0 })),
            Op::Step => Ok(x[0].map(|v| if v > 0.0 { 1.0 } else { 0.0 })),
            Op::Sigmoid => Ok(x[0].map(|v| 1.0 / (1.0 + (-v).exp()))),
            Op::AvgPool2d { k } => {
                rank(x[0], 4)?;
                let s = x[0].shape();
                if *k == 0 || s[2] < *k || s[3] < *k {
                    return Err(format!("pool {k} over {s:?}"));
                }
                let out = kernels::avgpool2d(s[0] * s[1], s[2], s[3], *k, x[0].data());
                Ok(Tensor::from_parts(vec![s[0], s[1], s[2] / k, s[3] / k], out))
            }
            Op::AvgPool2dGrad { k, h, w } => {
                rank(x[0], 4)?;
                let s = x[0].shape();
                if s[2] != h / k || s[3] != w / k {
                    return Err(format!("pooled {s:?} for {h}x{w} / {k}"));
                }
                let out = kernels::avgpool2d_grad(s[0] * s[1], *h, *w, *k, x[0].data());
                Ok(Tensor::from_parts(vec![s[0], s[1], *h, *w], out))
            }
            Op::Reshape(shape) => x[0].reshape(shape.clone()).map_err(|e| e.to_string()),
            Op::Sum => Ok(Tensor::scalar(x[0].sum())),
            Op::Mean => Ok(Tensor::scalar(x[0].sum() / x[0].numel() as f64)),
            Op::Expand(shape) => {
                if x[0].numel() != 1 {
                    return Err(format!("expand needs one element, got {:?}", x[0].shape()));
                }
                Ok(Tensor::full(shape.clone(), x[0].data()[0]))
            }
            Op::MaxLastAxis => {
                rank(x[0], 2)?;
                let k = x[0].shape()[1];
                let data = x[0]
                    .data()
                    .chunks(k)
                    .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
                    .collect();
                Ok(Tensor::from_parts(vec![x[0].shape()[0]], data))
            }
            Op::PickLastAxis(indices) => {
                rank(x[0], 2)?;
                let (n, k) = (x[0].shape()[0], x[0].shape()[1]);
                if indices.len() != n {
                    return Err(format!("{} indices for {n} rows", indices.len()));
                }
                check_indices(indices, k)?;
                let data = indices
                    .iter()
                    .enumerate()
                    .map(|(r, &c)| x[0].data()[r * k + c])
                    .collect();
                Ok(Tensor::from_parts(vec![n], data))
            }
            Op::ScatterLastAxis { indices, width } => {
                rank(x[0], 1)?;
                let n = x[0].shape()[0];
                if indices.len() != n {
                    return Err(format!("{} indices for {n} rows", indices.len()));
                }
                check_indices(indices, *width)?;
                let mut out = vec![0.0; n * width];
                for (r, (&c, &v)) in indices.iter().zip(x[0].data()).enumerate() {
                    out[r * width + c] = v;
                }
                Ok(Tensor::from_parts(vec![n, *width], out))
            }
            Op::Softmax => {
                let k = *x[0].shape().last().unwrap();
                Ok(Tensor::from_parts(
                    x[0].shape().to_vec(),
                    kernels::softmax_rows(k, x[0].data()),
                ))
            }
            Op::RowSum => {
                let k = *x[0].shape().last().unwrap();
                let mut out = Vec::with_capacity(x[0].numel());
                for row in x[0].data().chunks(k) {
                    let s: f64 = row.iter().sum();
                    out.extend(std::iter::repeat(s).take(k));
                }
                Ok(Tensor::from_parts(x[0].shape().to_vec(), out))
            }
            Op::SoftmaxCrossEntropy(labels) => {
                rank(x[0], 2)?;
                let (n, k) = (x[0].shape()[0], x[0].shape()[1]);
                if labels.len() != n {
                    return Err(format!("{} labels for {n} rows", labels.len()));
                }
                check_indices(labels, k)?;
                let lse = kernels::logsumexp_rows(k, x[0].data());
                let total: f64 = labels
                    .iter()
                    .enumerate()
                    .map(|(r, &y)| lse[r] - x[0].data()[r * k + y])
                    .sum();
                Ok(Tensor::scalar(total / n as f64))
            }
            Op::Mse => {
                same_shape(x[0], x[1])?;
                let total: f64 = x[0]
                    .data()
                    .iter()
                    .zip(x[1].data())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                Ok(Tensor::scalar(total / x[0].numel() as f64))
            }
            Op::GatherRows(rows) => {
                if x[0].rank() < 1 {
                    return Err("gather on scalar".into());
                }
                check_indices(rows, x[0].shape()[0])?;
                if rows.is_empty() {
                    return Err("empty row selection".into());
                }
                Ok(x[0].select_rows(rows))
            }
            Op::ScatterRows { rows, n } => {
                if x[0].shape()[0] != rows.len() {
                    return Err(format!("{} rows for {:?}", rows.len(), x[0].shape()));
                }
                check_indices(rows, *n)?;
                let row: usize = x[0].shape()[1..].iter().product();
                let mut out = vec![0.0; n * row];
                for (src, &dst) in x[0].data().chunks(row).zip(rows.iter()) {
                    for (o, v) in out[dst * row..(dst + 1) * row].iter_mut().zip(src) {
                        *o += v;
                    }
                }
                let mut shape = x[0].shape().to_vec();
                shape[0] = *n;
                Ok(Tensor::from_parts(shape, out))
            }
        }
    }
}

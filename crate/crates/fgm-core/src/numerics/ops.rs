use super::tensor::{broadcast_shapes, broadcast_strides, for_each_broadcast, reduce_to_shape};
use super::{NumericsError, Result, Tensor};

/// The operation vocabulary of the tape. Structured ops (matmul, softmax,
/// concat, ...) are limited to rank <= 2; elementwise ops broadcast
/// numpy-style.
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
    Matmul,
    Transpose,
    Concat { axis: usize },
    Slice { axis: usize, start: usize, end: usize },
    /// `axis: None` reduces to a scalar; `Some(a)` keeps the axis with extent 1.
    Sum { axis: Option<usize> },
    Mean { axis: Option<usize> },
    Tanh,
    Artanh,
    Sigmoid,
    Softmax { axis: usize },
    /// L2 norm; same axis conventions as `Sum`.
    Norm { axis: Option<usize> },
    Sqrt,
    Exp,
    Log,
    Broadcast { shape: Vec<usize> },
    /// Leaky ReLU with the given negative slope.
    LeakyRelu { slope: f64 },
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Matmul => "matmul",
            OpKind::Transpose => "transpose",
            OpKind::Concat { .. } => "concat",
            OpKind::Slice { .. } => "slice",
            OpKind::Sum { .. } => "sum",
            OpKind::Mean { .. } => "mean",
            OpKind::Tanh => "tanh",
            OpKind::Artanh => "artanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Softmax { .. } => "softmax",
            OpKind::Norm { .. } => "norm",
            OpKind::Sqrt => "sqrt",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Broadcast { .. } => "broadcast",
            OpKind::LeakyRelu { .. } => "leaky_relu",
        }
    }

    pub(crate) fn arity_ok(&self, n: usize) -> bool {
        match self {
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div | OpKind::Matmul => n == 2,
            OpKind::Concat { .. } => n >= 1,
            _ => n == 1,
        }
    }
}

fn shape_err(op: &'static str, detail: String) -> NumericsError {
    NumericsError::ShapeMismatch { op, detail }
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NumericsError::NonFinite { op })
    }
}

fn binary_elementwise(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    let out_shape = broadcast_shapes(a.shape(), b.shape())
        .ok_or_else(|| shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape())))?;
    let numel: usize = out_shape.iter().product();
    let mut out = vec![0.0; numel];
    let sa = broadcast_strides(a.shape(), &out_shape);
    let sb = broadcast_strides(b.shape(), &out_shape);
    let (da, db) = (a.data(), b.data());
    // walk both inputs in lockstep with the output
    let rank = out_shape.len();
    let mut coord = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    for o in out.iter_mut() {
        *o = f(da[ia], db[ib]);
        for d in (0..rank).rev() {
            coord[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if coord[d] < out_shape[d] {
                break;
            }
            ia -= sa[d] * out_shape[d];
            ib -= sb[d] * out_shape[d];
            coord[d] = 0;
        }
    }
    check_finite(op, &out)?;
    Tensor::new(out_shape, out)
}

fn unary_elementwise(
    op: &'static str,
    x: &Tensor,
    f: impl Fn(f64) -> f64,
) -> Result<Tensor> {
    let out: Vec<f64> = x.data().iter().map(|&v| f(v)).collect();
    check_finite(op, &out)?;
    Tensor::new(x.shape().to_vec(), out)
}

/// Treat a rank-1 tensor of n as a 1 x n matrix for 2-D structured ops.
fn as_2d(shape: &[usize]) -> Result<(usize, usize)> {
    match shape.len() {
        1 => Ok((1, shape[0])),
        2 => Ok((shape[0], shape[1])),
        _ => Err(shape_err("structured-op", format!("rank {} > 2", shape.len()))),
    }
}

pub(crate) fn forward(kind: &OpKind, inputs: &[&Tensor]) -> Result<Tensor> {
    if !kind.arity_ok(inputs.len()) {
        return Err(NumericsError::Invalid(format!(
            "{} got {} operands",
            kind.name(),
            inputs.len()
        )));
    }
    match kind {
        OpKind::Add => binary_elementwise("add", inputs[0], inputs[1], |a, b| a + b),
        OpKind::Sub => binary_elementwise("sub", inputs[0], inputs[1], |a, b| a - b),
        OpKind::Mul => binary_elementwise("mul", inputs[0], inputs[1], |a, b| a * b),
        OpKind::Div => binary_elementwise("div", inputs[0], inputs[1], |a, b| a / b),
        OpKind::Matmul => {
            let (a, b) = (inputs[0], inputs[1]);
            let (m, k) = as_2d(a.shape())?;
            let (k2, n) = as_2d(b.shape())?;
            if k != k2 {
                return Err(shape_err(
                    "matmul",
                    format!("{:?} x {:?}", a.shape(), b.shape()),
                ));
            }
            let mut out = vec![0.0; m * n];
            let (da, db) = (a.data(), b.data());
            for i in 0..m {
                for p in 0..k {
                    let av = da[i * k + p];
                    if av == 0.0 {
                        continue;
                    }
                    let brow = &db[p * n..(p + 1) * n];
                    let orow = &mut out[i * n..(i + 1) * n];
                    for j in 0..n {
                        orow[j] += av * brow[j];
                    }
                }
            }
            check_finite("matmul", &out)?;
            Tensor::new(vec![m, n], out)
        }
        OpKind::Transpose => {
            let x = inputs[0];
            let (m, n) = as_2d(x.shape())?;
            let d = x.data();
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    out[j * m + i] = d[i * n + j];
                }
            }
            Tensor::new(vec![n, m], out)
        }
        OpKind::Concat { axis } => {
            let axis = *axis;
            let shapes: Vec<(usize, usize)> =
                inputs.iter().map(|t| as_2d(t.shape())).collect::<Result<_>>()?;
            if axis > 1 {
                return Err(shape_err("concat", format!("axis {axis} > 1")));
            }
            let fixed = if axis == 0 { shapes[0].1 } else { shapes[0].0 };
            for s in &shapes {
                let f = if axis == 0 { s.1 } else { s.0 };
                if f != fixed {
                    return Err(shape_err("concat", format!("incompatible shapes {shapes:?}")));
                }
            }
            if axis == 0 {
                let rows: usize = shapes.iter().map(|s| s.0).sum();
                let mut out = Vec::with_capacity(rows * fixed);
                for t in inputs {
                    out.extend_from_slice(t.data());
                }
                Tensor::new(vec![rows, fixed], out)
            } else {
                let cols: usize = shapes.iter().map(|s| s.1).sum();
                let mut out = vec![0.0; fixed * cols];
                let mut col0 = 0usize;
                for (t, s) in inputs.iter().zip(&shapes) {
                    let d = t.data();
                    for i in 0..fixed {
                        out[i * cols + col0..i * cols + col0 + s.1]
                            .copy_from_slice(&d[i * s.1..(i + 1) * s.1]);
                    }
                    col0 += s.1;
                }
                Tensor::new(vec![fixed, cols], out)
            }
        }
        OpKind::Slice { axis, start, end } => {
            let x = inputs[0];
            let (m, n) = as_2d(x.shape())?;
            let (axis, start, end) = (*axis, *start, *end);
            let extent = if axis == 0 { m } else { n };
            if axis > 1 || start >= end || end > extent {
                return Err(shape_err(
                    "slice",
                    format!("axis {axis} range {start}..{end} of {:?}", x.shape()),
                ));
            }
            let d = x.data();
            if axis == 0 {
                Tensor::new(vec![end - start, n], d[start * n..end * n].to_vec())
            } else {
                let mut out = Vec::with_capacity(m * (end - start));
                for i in 0..m {
                    out.extend_from_slice(&d[i * n + start..i * n + end]);
                }
                Tensor::new(vec![m, end - start], out)
            }
        }
        OpKind::Sum { axis } => reduce(inputs[0], *axis, false),
        OpKind::Mean { axis } => reduce(inputs[0], *axis, true),
        OpKind::Tanh => unary_elementwise("tanh", inputs[0], f64::tanh),
        OpKind::Artanh => {
            let x = inputs[0];
            if x.data().iter().any(|v| v.abs() >= 1.0) {
                return Err(NumericsError::Domain {
                    op: "artanh",
                    detail: "input magnitude >= 1".into(),
                });
            }
            unary_elementwise("artanh", x, f64::atanh)
        }
        OpKind::Sigmoid => unary_elementwise("sigmoid", inputs[0], |v| 1.0 / (1.0 + (-v).exp())),
        OpKind::Softmax { axis } => softmax_forward(inputs[0], *axis),
        OpKind::Norm { axis } => {
            let sq = unary_elementwise("norm", inputs[0], |v| v * v)?;
            let summed = reduce(&sq, *axis, false)?;
            unary_elementwise("norm", &summed, f64::sqrt)
        }
        OpKind::Sqrt => {
            let x = inputs[0];
            if x.data().iter().any(|&v| v < 0.0) {
                return Err(NumericsError::Domain {
                    op: "sqrt",
                    detail: "negative input".into(),
                });
            }
            unary_elementwise("sqrt", x, f64::sqrt)
        }
        OpKind::Exp => unary_elementwise("exp", inputs[0], f64::exp),
        OpKind::Log => {
            let x = inputs[0];
            if x.data().iter().any(|&v| v <= 0.0) {
                return Err(NumericsError::Domain {
                    op: "log",
                    detail: "non-positive input".into(),
                });
            }
            unary_elementwise("log", x, f64::ln)
        }
        OpKind::Broadcast { shape } => {
            let x = inputs[0];
            let joined = broadcast_shapes(x.shape(), shape)
                .ok_or_else(|| shape_err("broadcast", format!("{:?} -> {shape:?}", x.shape())))?;
            if &joined != shape {
                return Err(shape_err("broadcast", format!("{:?} -> {shape:?}", x.shape())));
            }
            let numel: usize = shape.iter().product();
            let mut out = vec![0.0; numel];
            let strides = broadcast_strides(x.shape(), shape);
            let d = x.data();
            for_each_broadcast(shape, &strides, |o, i| out[o] = d[i]);
            Tensor::new(shape.clone(), out)
        }
        OpKind::LeakyRelu { slope } => {
            let s = *slope;
            unary_elementwise("leaky_relu", inputs[0], |v| if v >= 0.0 { v } else { s * v })
        }
    }
}

fn reduce(x: &Tensor, axis: Option<usize>, mean: bool) -> Result<Tensor> {
    match axis {
        None => {
            let mut acc = 0.0;
            for v in x.data() {
                acc += v;
            }
            if mean {
                acc /= x.numel() as f64;
            }
            check_finite("reduce", &[acc])?;
            Tensor::scalar(acc)
        }
        Some(a) => {
            let (m, n) = as_2d(x.shape())?;
            if a > 1 {
                return Err(shape_err("reduce", format!("axis {a} > 1")));
            }
            let d = x.data();
            if a == 1 {
                let mut out = vec![0.0; m];
                for i in 0..m {
                    for j in 0..n {
                        out[i] += d[i * n + j];
                    }
                    if mean {
                        out[i] /= n as f64;
                    }
                }
                check_finite("reduce", &out)?;
                Tensor::new(vec![m, 1], out)
            } else {
                let mut out = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        out[j] += d[i * n + j];
                    }
                }
                if mean {
                    for v in &mut out {
                        *v /= m as f64;
                    }
                }
                check_finite("reduce", &out)?;
                Tensor::new(vec![1, n], out)
            }
        }
    }
}

fn softmax_forward(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (m, n) = as_2d(x.shape())?;
    if axis > 1 {
        return Err(shape_err("softmax", format!("axis {axis} > 1")));
    }
    let d = x.data();
    let mut out = vec![0.0; m * n];
    if axis == 1 || x.rank() == 1 {
        for i in 0..m {
            let row = &d[i * n..(i + 1) * n];
            let mx = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let mut z = 0.0;
            for j in 0..n {
                let e = (row[j] - mx).exp();
                out[i * n + j] = e;
                z += e;
            }
            for j in 0..n {
                out[i * n + j] /= z;
            }
        }
    } else {
        for j in 0..n {
            let mut mx = f64::NEG_INFINITY;
            for i in 0..m {
                mx = mx.max(d[i * n + j]);
            }
            let mut z = 0.0;
            for i in 0..m {
                let e = (d[i * n + j] - mx).exp();
                out[i * n + j] = e;
                z += e;
            }
            for i in 0..m {
                out[i * n + j] /= z;
            }
        }
    }
    check_finite("softmax", &out)?;
    Tensor::new(x.shape().to_vec(), out)
}

/// Vector-Jacobian product: gradient of the output w.r.t. input `arg`,
/// given upstream gradient `grad`. `inputs` are the forward operands and
/// `output` the forward result.
pub(crate) fn vjp(
    kind: &OpKind,
    grad: &Tensor,
    inputs: &[&Tensor],
    output: &Tensor,
    arg: usize,
) -> Result<Tensor> {
    let g = grad.data();
    match kind {
        OpKind::Add => {
            let t = inputs[arg];
            let data = reduce_to_shape(g, grad.shape(), t.shape());
            Tensor::new(t.shape().to_vec(), data)
        }
        OpKind::Sub => {
            let t = inputs[arg];
            let sign = if arg == 0 { 1.0 } else { -1.0 };
            let signed: Vec<f64> = g.iter().map(|v| sign * v).collect();
            let data = reduce_to_shape(&signed, grad.shape(), t.shape());
            Tensor::new(t.shape().to_vec(), data)
        }
        OpKind::Mul => {
            let other = inputs[1 - arg];
            let prod = binary_elementwise("mul-vjp", grad, other, |a, b| a * b)?;
            let data = reduce_to_shape(prod.data(), prod.shape(), inputs[arg].shape());
            Tensor::new(inputs[arg].shape().to_vec(), data)
        }
        OpKind::Div => {
            // y = a / b ; dy/da = 1/b ; dy/db = -a/b^2
            let (a, b) = (inputs[0], inputs[1]);
            let local = if arg == 0 {
                binary_elementwise("div-vjp", grad, b, |gv, bv| gv / bv)?
            } else {
                let t = binary_elementwise("div-vjp", a, b, |av, bv| -av / (bv * bv))?;
                binary_elementwise("div-vjp", grad, &t, |gv, tv| gv * tv)?
            };
            let data = reduce_to_shape(local.data(), local.shape(), inputs[arg].shape());
            Tensor::new(inputs[arg].shape().to_vec(), data)
        }
        OpKind::Matmul => {
            let (a, b) = (inputs[0], inputs[1]);
            let ga = forward(&OpKind::Matmul, &[grad, &forward(&OpKind::Transpose, &[b])?]);
            let gb = forward(&OpKind::Matmul, &[&forward(&OpKind::Transpose, &[a])?, grad]);
            let out = if arg == 0 { ga? } else { gb? };
            // undo the rank-1 promotion if the operand was a vector
            out.reshape(inputs[arg].shape().to_vec())
        }
        OpKind::Transpose => {
            let t = forward(&OpKind::Transpose, &[grad])?;
            t.reshape(inputs[0].shape().to_vec())
        }
        OpKind::Concat { axis } => {
            let mut start = 0usize;
            for t in inputs.iter().take(arg) {
                let (m, n) = as_2d(t.shape())?;
                start += if *axis == 0 { m } else { n };
            }
            let (m, n) = as_2d(inputs[arg].shape())?;
            let len = if *axis == 0 { m } else { n };
            let sliced = forward(
                &OpKind::Slice { axis: *axis, start, end: start + len },
                &[grad],
            )?;
            sliced.reshape(inputs[arg].shape().to_vec())
        }
        OpKind::Slice { axis, start, .. } => {
            let x = inputs[0];
            let (m, n) = as_2d(x.shape())?;
            let (gm, gn) = as_2d(grad.shape())?;
            let mut out = vec![0.0; m * n];
            if *axis == 0 {
                out[start * n..start * n + gm * gn].copy_from_slice(g);
            } else {
                for i in 0..gm {
                    for j in 0..gn {
                        out[i * n + start + j] = g[i * gn + j];
                    }
                }
            }
            Tensor::new(x.shape().to_vec(), out)
        }
        OpKind::Sum { .. } => {
            let x = inputs[0];
            let (m, n) = as_2d(x.shape())?;
            let strides = broadcast_strides(grad.shape(), &[m, n]);
            let mut out = vec![0.0; x.numel()];
            for_each_broadcast(&[m, n], &strides, |o, i| out[o] = g[i]);
            Tensor::new(x.shape().to_vec(), out)
        }
        OpKind::Mean { axis } => {
            let x = inputs[0];
            let (m, n) = as_2d(x.shape())?;
            let denom = match axis {
                None => x.numel() as f64,
                Some(a) => {
                    if *a == 1 {
                        n as f64
                    } else {
                        m as f64
                    }
                }
            };
            let strides = broadcast_strides(grad.shape(), &[m, n]);
            let mut out = vec![0.0; x.numel()];
            for_each_broadcast(&[m, n], &strides, |o, i| out[o] = g[i] / denom);
            Tensor::new(x.shape().to_vec(), out)
        }
        OpKind::Tanh => {
            let y = output.data();
            let out: Vec<f64> = g.iter().zip(y).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect();
            Tensor::new(inputs[0].shape().to_vec(), out)
        }
        OpKind::Artanh => {
            let x = inputs[0].data();
            let out: Vec<f64> = g.iter().zip(x).map(|(gv, xv)| gv / (1.0 - xv * xv)).collect();
            check_finite("artanh-vjp", &out)?;
            Tensor::new(inputs[0].shape().to_vec(), out)
        }
        OpKind::Sigmoid => {
            let y = output.data();
            let out: Vec<f64> = g.iter().zip(y).map(|(gv, yv)| gv * yv * (1.0 - yv)).collect();
            Tensor::new(inputs[0].shape().to_vec(), out)
        }
        OpKind::Softmax { axis } => {
            // dx = (g - sum(g*y, axis)) * y
            let y = output;
            let yshape2 = if y.rank() == 1 { vec![1, y.numel()] } else { y.shape().to_vec() };
            let axis2 = if y.rank() == 1 { 1 } else { *axis };
            let gy = binary_elementwise("softmax-vjp", grad, y, |a, b| a * b)?;
            let summed = reduce(&gy.reshape(yshape2.clone())?, Some(axis2), false)?;
            let strides = broadcast_strides(summed.shape(), &yshape2);
            let mut out = vec![0.0; y.numel()];
            let sd = summed.data();
            let yd = y.data();
            for_each_broadcast(&yshape2, &strides, |o, i| {
                out[o] = (g[o] - sd[i]) * yd[o];
            });
            Tensor::new(inputs[0].shape().to_vec(), out)
        }
        OpKind::Norm { .. } => {
            // d||x|| / dx = x / ||x||
            let x = inputs[0];
            let (m, n) = as_2d(x.shape())?;
            let strides = broadcast_strides(output.shape(), &[m, n]);
            let gd = grad.data();
            let yd = output.data();
            let xd = x.data();
            let mut out = vec![0.0; x.numel()];
            for_each_broadcast(&[m, n], &strides, |o, i| {
                out[o] = gd[i] * xd[o] / yd[i];
            });
            check_finite("norm-vjp", &out)?;
            Tensor::new(x.shape().to_vec(), out)
        }
        OpKind::Sqrt => {
            let y = output.data();
            let out: Vec<f64> = g.iter().zip(y).map(|(gv, yv)| gv / (2.0 * yv)).collect();
            check_finite("sqrt-vjp", &out)?;
            Tensor::new(inputs[0].shape().to_vec(), out)
        }
        OpKind::Exp => {
            let y = output.data();
            let out: Vec<f64> = g.iter().zip(y).map(|(gv, yv)| gv * yv).collect();
            check_finite("exp-vjp", &out)?;
            Tensor::new(inputs[0].shape().to_vec(), out)
        }
        OpKind::Log => {
            let x = inputs[0].data();
            let out: Vec<f64> = g.iter().zip(x).map(|(gv, xv)| gv / xv).collect();
            check_finite("log-vjp", &out)?;
            Tensor::new(inputs[0].shape().to_vec(), out)
        }
        OpKind::Broadcast { .. } => {
            let x = inputs[0];
            let data = reduce_to_shape(g, grad.shape(), x.shape());
            Tensor::new(x.shape().to_vec(), data)
        }
        OpKind::LeakyRelu { slope } => {
            let x = inputs[0].data();
            let s = *slope;
            let out: Vec<f64> = g
                .iter()
                .zip(x)
                .map(|(gv, xv)| if *xv >= 0.0 { *gv } else { gv * s })
                .collect();
            Tensor::new(inputs[0].shape().to_vec(), out)
        }
    }
}

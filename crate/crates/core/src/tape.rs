//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] lives for exactly one forward pass. Every operation appends a node
//! holding its output value and enough information to run its backward rule;
//! nodes are therefore always in topological order. [`Tape::backward`] walks the
//! nodes in reverse and returns a [`Gradients`] table for every node that
//! requires a gradient.

use crate::error::{Error, Result};
use crate::kernels::{self, ConvGeom};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Div,
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Softplus,
    Scale(f32),
}

impl Elementwise {
    pub fn is_binary(self) -> bool {
        matches!(self, Elementwise::Add | Elementwise::Sub | Elementwise::Mul | Elementwise::Div)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvParams {
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Unary { kind: Elementwise, a: Var },
    Binary { kind: Elementwise, a: Var, b: Var },
    MatMul { a: Var, b: Var },
    AddRow { a: Var, bias: Var },
    AddChannel { a: Var, bias: Var },
    Concat { parts: Vec<Var> },
    SliceCols { a: Var, start: usize },
    Reshape { a: Var },
    Softmax { a: Var, axis: usize, log: bool },
    Sum { a: Var },
    Conv2d { x: Var, w: Var, geom: ConvGeom },
    ConvTranspose2d { x: Var, w: Var, geom: ConvGeom },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `shape` when nothing reached it.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape.to_vec()))
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn softplus(x: f32) -> f32 {
    if x > 20.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn variable(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn elementwise(&mut self, kind: Elementwise, a: Var, b: Option<Var>) -> Result<Var> {
        match (kind.is_binary(), b) {
            (true, Some(b)) => self.binary(kind, a, b),
            (false, None) => Ok(self.unary(kind, a)),
            (true, None) => Err(Error::invalid(format!("{kind:?} needs two operands"))),
            (false, Some(_)) => Err(Error::invalid(format!("{kind:?} takes one operand"))),
        }
    }

    fn unary(&mut self, kind: Elementwise, a: Var) -> Var {
        let x = self.value(a);
        let out = match kind {
            Elementwise::Relu => x.map(|v| v.max(0.0)),
            Elementwise::Sigmoid => x.map(sigmoid),
            Elementwise::Tanh => x.map(f32::tanh),
            Elementwise::Exp => x.map(f32::exp),
            Elementwise::Log => x.map(f32::ln),
            Elementwise::Softplus => x.map(softplus),
            Elementwise::Scale(c) => x.map(|v| v * c),
            _ => unreachable!("binary kind in unary"),
        };
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Unary { kind, a }, rg)
    }

    fn binary(&mut self, kind: Elementwise, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let f = |x: f32, y: f32| match kind {
            Elementwise::Add => x + y,
            Elementwise::Sub => x - y,
            Elementwise::Mul => x * y,
            Elementwise::Div => x / y,
            _ => unreachable!(),
        };
        let out = if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(ta.shape().to_vec(), data)?
        } else if tb.is_scalar() {
            let y = tb.item();
            ta.map(|x| f(x, y))
        } else if ta.is_scalar() {
            let x = ta.item();
            tb.map(|y| f(x, y))
        } else {
            return Err(shape_err("elementwise", ta, tb));
        };
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Binary { kind, a, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Elementwise::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Elementwise::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Elementwise::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Elementwise::Div, a, b)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Elementwise::Relu, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Elementwise::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Elementwise::Tanh, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Elementwise::Exp, a)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(Elementwise::Log, a)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(Elementwise::Softplus, a)
    }

    pub fn scale(&mut self, a: Var, c: f32) -> Var {
        self.unary(Elementwise::Scale(c), a)
    }

    pub fn add_scalar(&mut self, a: Var, c: f32) -> Var {
        let s = self.constant(Tensor::scalar(c));
        self.binary(Elementwise::Add, a, s).expect("scalar broadcast")
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.binary(Elementwise::Mul, a, a).expect("same shape")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(shape_err("matmul", ta, tb));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let out = Tensor::new(vec![m, n], kernels::matmul(ta.data(), tb.data(), m, k, n))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::MatMul { a, b }, rg))
    }

    /// `a[m×n] + bias[n]`, the bias repeated for every row.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        if ta.rank() != 2 || tb.numel() != ta.shape()[1] {
            return Err(shape_err("add_row", ta, tb));
        }
        let n = ta.shape()[1];
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + tb.data()[i % n])
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a, bias]);
        Ok(self.push(out, Op::AddRow { a, bias }, rg))
    }

    /// `a[N×C×H×W] + bias[C]`.
    pub fn add_channel(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        if ta.rank() != 4 || tb.numel() != ta.shape()[1] {
            return Err(shape_err("add_channel", ta, tb));
        }
        let c = ta.shape()[1];
        let plane = ta.shape()[2] * ta.shape()[3];
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + tb.data()[(i / plane) % c])
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a, bias]);
        Ok(self.push(out, Op::AddChannel { a, bias }, rg))
    }

    /// Concatenates 2-D tensors with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat of nothing"))?;
        let rows = self.value(*first).shape()[0];
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 2 || t.shape()[0] != rows {
                return Err(shape_err("concat_cols", self.value(*first), t));
            }
        }
        let total: usize = parts.iter().map(|&p| self.value(p).shape()[1]).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(vec![rows, total], data)?;
        let rg = self.any_grad(parts);
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
            },
            rg,
        ))
    }

    /// Columns `start..end` of a 2-D tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() != 2 || start >= end || end > ta.shape()[1] {
            return Err(Error::InvalidShape {
                op: "slice_cols",
                msg: format!("columns {start}..{end} of {:?}", ta.shape()),
            });
        }
        let rows = ta.shape()[0];
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&ta.row(r)[start..end]);
        }
        let out = Tensor::new(vec![rows, end - start], data)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::SliceCols { a, start }, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(shape.to_vec())?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::Reshape { a }, rg))
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.softmax_impl(a, axis, false)
    }

    pub fn log_softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.softmax_impl(a, axis, true)
    }

    fn softmax_impl(&mut self, a: Var, axis: usize, log: bool) -> Result<Var> {
        let ta = self.value(a);
        if axis >= ta.rank() {
            return Err(Error::InvalidShape {
                op: "softmax",
                msg: format!("axis {axis} out of range for {:?}", ta.shape()),
            });
        }
        let data = kernels::softmax(ta.data(), ta.shape(), axis, log);
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::Softmax { a, axis, log }, rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().map(|&x| x as f64).sum();
        let rg = self.any_grad(&[a]);
        self.push(Tensor::scalar(s as f32), Op::Sum { a }, rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel() as f32;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    fn conv_geom(&self, x: Var, w: Var, p: ConvParams, transpose: bool, output_padding: usize) -> Result<ConvGeom> {
        let (tx, tw) = (self.value(x), self.value(w));
        let bad = |msg: String| Error::InvalidShape { op: "conv2d", msg };
        if tx.rank() != 4 || tw.rank() != 4 {
            return Err(shape_err("conv2d", tx, tw));
        }
        if p.stride == 0 {
            return Err(bad("stride must be positive".into()));
        }
        let (n, c, h, wd) = (tx.shape()[0], tx.shape()[1], tx.shape()[2], tx.shape()[3]);
        let (kh, kw) = (tw.shape()[2], tw.shape()[3]);
        if tw.shape()[if transpose { 0 } else { 1 }] != c {
            return Err(shape_err("conv2d channels", tx, tw));
        }
        if !transpose {
            if h + 2 * p.padding < kh || wd + 2 * p.padding < kw {
                return Err(bad(format!("kernel {kh}x{kw} larger than padded input {h}x{wd}")));
            }
            Ok(ConvGeom {
                batch: n,
                in_ch: c,
                out_ch: tw.shape()[0],
                in_h: h,
                in_w: wd,
                out_h: (h + 2 * p.padding - kh) / p.stride + 1,
                out_w: (wd + 2 * p.padding - kw) / p.stride + 1,
                kh,
                kw,
                stride: p.stride,
                padding: p.padding,
            })
        } else {
            if output_padding >= p.stride {
                return Err(bad(format!(
                    "output padding {output_padding} must be smaller than stride {}",
                    p.stride
                )));
            }
            let full = |len: usize, k: usize| ((len - 1) * p.stride + k + output_padding).checked_sub(2 * p.padding);
            let (oh, ow) = match (full(h, kh), full(wd, kw)) {
                (Some(a), Some(b)) if a > 0 && b > 0 => (a, b),
                _ => return Err(bad(format!("padding {} too large for transpose of {h}x{wd}", p.padding))),
            };
            // Described as the forward convolution from the (oh, ow) grid to (h, w).
            Ok(ConvGeom {
                batch: n,
                in_ch: tw.shape()[1],
                out_ch: c,
                in_h: oh,
                in_w: ow,
                out_h: h,
                out_w: wd,
                kh,
                kw,
                stride: p.stride,
                padding: p.padding,
            })
        }
    }

    /// `x[N×C×H×W]` convolved with `w[O×C×kh×kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, p: ConvParams) -> Result<Var> {
        let geom = self.conv_geom(x, w, p, false, 0)?;
        let data = kernels::conv2d_forward(self.value(x).data(), self.value(w).data(), &geom);
        let out = Tensor::new(vec![geom.batch, geom.out_ch, geom.out_h, geom.out_w], data)?;
        let rg = self.any_grad(&[x, w]);
        Ok(self.push(out, Op::Conv2d { x, w, geom }, rg))
    }

    /// Transposed convolution of `x[N×C_in×H×W]` with `w[C_in×C_out×kh×kw]`.
    /// Output size is `(H−1)·stride − 2·padding + kh + output_padding`.
    pub fn conv2d_transpose(&mut self, x: Var, w: Var, p: ConvParams, output_padding: usize) -> Result<Var> {
        let geom = self.conv_geom(x, w, p, true, output_padding)?;
        let data = kernels::conv_transpose_forward(self.value(x).data(), self.value(w).data(), &geom);
        let out = Tensor::new(vec![geom.batch, geom.in_ch, geom.in_h, geom.in_w], data)?;
        let rg = self.any_grad(&[x, w]);
        Ok(self.push(out, Op::ConvTranspose2d { x, w, geom }, rg))
    }

    /// Runs reverse-mode differentiation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backward_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                let node = &self.nodes[i];
                g.filter(|_| node.requires_grad)
                    .map(|d| Tensor::new(node.value.shape().to_vec(), d).expect("grad shape"))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f32>>], v: Var, contrib: Vec<f32>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let target = self.nodes[v.0].value.numel();
        // Scalar operands broadcast in the forward pass; reduce back.
        let contrib = if contrib.len() != target && target == 1 {
            vec![contrib.iter().sum()]
        } else {
            contrib
        };
        match &mut grads[v.0] {
            Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a += c),
            slot @ None => *slot = Some(contrib),
        }
    }

    fn backward_node(&self, node: &Node, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Unary { kind, a } => {
                let x = self.value(*a).data();
                let d: Vec<f32> = match kind {
                    Elementwise::Relu => x.iter().zip(g).map(|(&x, &g)| if x > 0.0 { g } else { 0.0 }).collect(),
                    Elementwise::Sigmoid => y.iter().zip(g).map(|(&y, &g)| g * y * (1.0 - y)).collect(),
                    Elementwise::Tanh => y.iter().zip(g).map(|(&y, &g)| g * (1.0 - y * y)).collect(),
                    Elementwise::Exp => y.iter().zip(g).map(|(&y, &g)| g * y).collect(),
                    Elementwise::Log => x.iter().zip(g).map(|(&x, &g)| g / x).collect(),
                    Elementwise::Softplus => x.iter().zip(g).map(|(&x, &g)| g * sigmoid(x)).collect(),
                    Elementwise::Scale(c) => g.iter().map(|&g| g * c).collect(),
                    _ => unreachable!(),
                };
                self.accumulate(grads, *a, d);
            }
            Op::Binary { kind, a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let n = g.len();
                let av = |i: usize| if ta.numel() == n { ta.data()[i] } else { ta.data()[0] };
                let bv = |i: usize| if tb.numel() == n { tb.data()[i] } else { tb.data()[0] };
                let (da, db): (Vec<f32>, Vec<f32>) = match kind {
                    Elementwise::Add => (g.to_vec(), g.to_vec()),
                    Elementwise::Sub => (g.to_vec(), g.iter().map(|&g| -g).collect()),
                    Elementwise::Mul => (
                        (0..n).map(|i| g[i] * bv(i)).collect(),
                        (0..n).map(|i| g[i] * av(i)).collect(),
                    ),
                    Elementwise::Div => (
                        (0..n).map(|i| g[i] / bv(i)).collect(),
                        (0..n).map(|i| -g[i] * av(i) / (bv(i) * bv(i))).collect(),
                    ),
                    _ => unreachable!(),
                };
                self.accumulate(grads, *a, da);
                self.accumulate(grads, *b, db);
            }
            Op::MatMul { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.nodes[a.0].requires_grad {
                    self.accumulate(grads, *a, kernels::matmul_grad_a(g, tb.data(), m, k, n));
                }
                if self.nodes[b.0].requires_grad {
                    self.accumulate(grads, *b, kernels::matmul_grad_b(ta.data(), g, m, k, n));
                }
            }
            Op::AddRow { a, bias } => {
                let n = self.value(*bias).numel();
                let mut db = vec![0.0f32; n];
                for (i, &gv) in g.iter().enumerate() {
                    db[i % n] += gv;
                }
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *bias, db);
            }
            Op::AddChannel { a, bias } => {
                let shape = node.value.shape();
                let (c, plane) = (shape[1], shape[2] * shape[3]);
                let mut db = vec![0.0f32; c];
                for (i, &gv) in g.iter().enumerate() {
                    db[(i / plane) % c] += gv;
                }
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *bias, db);
            }
            Op::Concat { parts } => {
                let shape = node.value.shape();
                let (rows, total) = (shape[0], shape[1]);
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).shape()[1];
                    let mut d = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        d.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                    }
                    self.accumulate(grads, p, d);
                    offset += w;
                }
            }
            Op::SliceCols { a, start } => {
                let src = self.value(*a).shape();
                let (rows, cols) = (src[0], src[1]);
                let w = node.value.shape()[1];
                let mut d = vec![0.0f32; rows * cols];
                for r in 0..rows {
                    d[r * cols + start..r * cols + start + w].copy_from_slice(&g[r * w..(r + 1) * w]);
                }
                self.accumulate(grads, *a, d);
            }
            Op::Reshape { a } => self.accumulate(grads, *a, g.to_vec()),
            Op::Softmax { a, axis, log } => {
                let (outer, len, inner) = kernels::axis_split(node.value.shape(), *axis);
                let mut d = vec![0.0f32; g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * len + j) * inner + i;
                        if *log {
                            let gsum: f32 = (0..len).map(|j| g[idx(j)]).sum();
                            for j in 0..len {
                                d[idx(j)] = g[idx(j)] - y[idx(j)].exp() * gsum;
                            }
                        } else {
                            let dot: f32 = (0..len).map(|j| g[idx(j)] * y[idx(j)]).sum();
                            for j in 0..len {
                                d[idx(j)] = y[idx(j)] * (g[idx(j)] - dot);
                            }
                        }
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::Sum { a } => {
                let n = self.value(*a).numel();
                self.accumulate(grads, *a, vec![g[0]; n]);
            }
            Op::Conv2d { x, w, geom } => {
                let (gx, gw) = kernels::conv2d_backward(self.value(*x).data(), self.value(*w).data(), g, geom);
                self.accumulate(grads, *x, gx);
                self.accumulate(grads, *w, gw);
            }
            Op::ConvTranspose2d { x, w, geom } => {
                let (gx, gw) = kernels::conv_transpose_backward(self.value(*x).data(), self.value(*w).data(), g, geom);
                self.accumulate(grads, *x, gx);
                self.accumulate(grads, *w, gw);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    GaussianNll,
}

impl Tape {
    /// Scalar loss between `pred` and `target`.
    ///
    /// `Mse` is the mean squared error. `GaussianNll` is the per-element mean of
    /// `(pred − target)² / (2σ²) + log σ`, with constant terms dropped; `sigma` is
    /// required for it and must be strictly positive.
    pub fn loss(&mut self, kind: LossKind, pred: Var, target: Var, sigma: Option<Var>) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(shape_err("loss", self.value(pred), self.value(target)));
        }
        let diff = self.sub(pred, target)?;
        let sq = self.square(diff);
        match kind {
            LossKind::Mse => Ok(self.mean(sq)),
            LossKind::GaussianNll => {
                let sigma = sigma.ok_or_else(|| Error::invalid("gaussian_nll needs sigma"))?;
                if let Some(&bad) = self.value(sigma).data().iter().find(|&&s| !(s > 0.0)) {
                    return Err(Error::invalid(format!("gaussian_nll sigma must be positive, got {bad}")));
                }
                let var = self.square(sigma);
                let var2 = self.scale(var, 2.0);
                let quad = self.div(sq, var2)?;
                let log_sigma = self.log(sigma);
                let total = self.add(quad, log_sigma)?;
                Ok(self.mean(total))
            }
        }
    }

    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.loss(LossKind::Mse, pred, target, None)
    }

    pub fn gaussian_nll(&mut self, pred: Var, target: Var, sigma: Var) -> Result<Var> {
        self.loss(LossKind::GaussianNll, pred, target, Some(sigma))
    }

    /// Mean cross-entropy of `logits[B×K]` against integer class labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(Error::InvalidShape {
                op: "cross_entropy",
                msg: format!("logits {shape:?} vs {} labels", labels.len()),
            });
        }
        let k = shape[1];
        let mut onehot = vec![0.0f32; labels.len() * k];
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::invalid(format!("label {l} out of range for {k} classes")));
            }
            onehot[i * k + l] = 1.0;
        }
        let onehot = self.constant(Tensor::new(shape.clone(), onehot)?);
        let logp = self.log_softmax(logits, 1)?;
        let picked = self.mul(logp, onehot)?;
        let total = self.sum(picked);
        Ok(self.scale(total, -1.0 / labels.len() as f32))
    }
}

use std::sync::Arc;

use super::gemm::gemm;
use super::params::ParameterStore;
use super::tensor::{dims2, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

pub(crate) enum Op {
    Input,
    Param(String),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    AddRowBias(Var, Var),
    AddChannelBias(Var, Var),
    MatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
        m: usize,
        k: usize,
        n: usize,
    },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Reshape(Var),
    GatherRows { x: Var, rows: Vec<usize> },
    Transpose(Var),
    Conv2d(super::nn::ConvSaved),
    MaxPool2 { x: Var, argmax: Vec<usize> },
    Sample(super::nn::SampleSaved),
    LstmCell { gates: Var, c_prev: Var },
    CrossEntropy { logits: Var, targets: Vec<usize>, weights: Vec<f64> },
    BceLogits { logits: Var, targets: Vec<f64>, weights: Vec<f64> },
    SmoothL1 { x: Var, target: Vec<f64>, weights: Vec<f64>, beta: f64 },
    Ctc { logits: Var, grad: Vec<f64> },
}

pub(crate) struct Node {
    pub(crate) value: Arc<Tensor>,
    pub(crate) op: Op,
    pub(crate) needs_grad: bool,
}

/// Reverse-mode tape. Every op checks its output for non-finite values.
#[derive(Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data[0]
    }

    pub(crate) fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value.data
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op, needs_grad: bool, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric { op: name });
        }
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant input; no gradient is tracked.
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Input, false, "constant")
    }

    /// Input whose gradient is retained after [`Graph::backward`].
    pub fn input(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Input, true, "input")
    }

    /// Leaf bound to a named parameter. Frozen parameters still receive a gradient.
    pub fn param(&mut self, store: &ParameterStore, name: &str) -> Result<Var> {
        let value = store
            .get_arc(name)
            .ok_or_else(|| Error::Input(format!("unknown parameter `{name}`")))?;
        self.nodes.push(Node {
            value,
            op: Op::Param(name.to_string()),
            needs_grad: true,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.data(a).len() != self.data(b).len() {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn zip_map(&mut self, a: Var, b: Var, op: Op, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| f(*x, *y)).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs(&[a, b]);
        self.push(Tensor { shape, data }, op, ng, name)
    }

    fn map(&mut self, a: Var, op: Op, name: &'static str, f: impl Fn(f64) -> f64) -> Result<Var> {
        let data = self.data(a).iter().map(|x| f(*x)).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs(&[a]);
        self.push(Tensor { shape, data }, op, ng, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.map(a, Op::Scale(a, s), "scale", |x| x * s)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        self.map(a, Op::AddScalar(a), "add_scalar", |x| x + s)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Relu(a), "relu", |x| x.max(0.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Sigmoid(a), "sigmoid", sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Tanh(a), "tanh", f64::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Exp(a), "exp", f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Log(a), "log", f64::ln)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Square(a), "square", |x| x * x)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.data(a).iter().sum();
        let ng = self.needs(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), ng, "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.data(a).len().max(1) as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Adds a length-`C` bias to every row of an `R×C` array.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (r, c) = dims2(self.shape(x));
        if self.data(b).len() != c {
            return Err(Error::shape("add_row_bias", format!("{r}×{c} with bias {:?}", self.shape(b))));
        }
        let bias = self.data(b);
        let data: Vec<f64> = self
            .data(x)
            .chunks(c)
            .flat_map(|row| row.iter().zip(bias).map(|(v, bb)| v + bb))
            .collect();
        let shape = self.shape(x).to_vec();
        let ng = self.needs(&[x, b]);
        self.push(Tensor { shape, data }, Op::AddRowBias(x, b), ng, "add_row_bias")
    }

    /// Adds `b[c]` to every element of channel `c` of a `C×…` array.
    pub fn add_channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let c = self.shape(x)[0];
        if self.data(b).len() != c {
            return Err(Error::shape("add_channel_bias", format!("{:?} with bias {:?}", self.shape(x), self.shape(b))));
        }
        let per = self.data(x).len() / c.max(1);
        let bias = self.data(b);
        let data: Vec<f64> = self
            .data(x)
            .chunks(per.max(1))
            .zip(bias)
            .flat_map(|(plane, bb)| plane.iter().map(move |v| v + bb))
            .collect();
        let shape = self.shape(x).to_vec();
        let ng = self.needs(&[x, b]);
        self.push(Tensor { shape, data }, Op::AddChannelBias(x, b), ng, "add_channel_bias")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, false)
    }

    /// `op(a)·op(b)` where `op` optionally transposes a 2-D operand.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var> {
        let (ar, ac) = dims2(self.shape(a));
        let (br, bc) = dims2(self.shape(b));
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("{:?}{} · {:?}{}", self.shape(a), if ta { "ᵀ" } else { "" }, self.shape(b), if tb { "ᵀ" } else { "" }),
            ));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.data(a), ta, self.data(b), tb, &mut out, 0.0);
        let ng = self.needs(&[a, b]);
        self.push(
            Tensor { shape: vec![m, n], data: out },
            Op::MatMul { a, b, ta, tb, m, k, n },
            ng,
            "matmul",
        )
    }

    /// Dense affine layer: `x·w + b` with `w` stored `in×out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_row_bias(y, b)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (_, c) = dims2(self.shape(a));
        let data: Vec<f64> = self.data(a).chunks(c).flat_map(softmax).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs(&[a]);
        self.push(Tensor { shape, data }, Op::SoftmaxRows(a), ng, "softmax")
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (_, c) = dims2(self.shape(a));
        let data: Vec<f64> = self.data(a).chunks(c).flat_map(log_softmax).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs(&[a]);
        self.push(Tensor { shape, data }, Op::LogSoftmaxRows(a), ng, "log_softmax")
    }

    /// Flat concatenation into a 1-D array.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::with_capacity(parts.iter().map(|p| self.data(*p).len()).sum());
        for p in parts {
            data.extend_from_slice(self.data(*p));
        }
        let ng = self.needs(parts);
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()), ng, "concat")
    }

    /// Stacks equally sized parts as rows of a 2-D array.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let width = parts.first().map(|p| self.data(*p).len()).unwrap_or(0);
        if parts.iter().any(|p| self.data(*p).len() != width) {
            return Err(Error::shape("stack_rows", "parts differ in length"));
        }
        let flat = self.concat(parts)?;
        self.reshape(flat, &[parts.len(), width])
    }

    /// Contiguous flat range `[start, start+len)` as a 1-D array.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.data(x).len();
        if start + len > n {
            return Err(Error::shape("slice", format!("[{start}, {}) of {n}", start + len)));
        }
        let data = self.data(x)[start..start + len].to_vec();
        let ng = self.needs(&[x]);
        self.push(Tensor::vector(data), Op::Slice { x, start }, ng, "slice")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.data(x).len() {
            return Err(Error::shape("reshape", format!("{:?} -> {shape:?}", self.shape(x))));
        }
        let value = Tensor {
            shape: shape.to_vec(),
            data: self.data(x).to_vec(),
        };
        let ng = self.needs(&[x]);
        self.push(value, Op::Reshape(x), ng, "reshape")
    }

    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let (r, c) = dims2(self.shape(x));
        if let Some(bad) = rows.iter().find(|&&i| i >= r) {
            return Err(Error::shape("gather_rows", format!("row {bad} of {r}")));
        }
        let src = self.data(x);
        let mut data = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            data.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        let ng = self.needs(&[x]);
        self.push(
            Tensor { shape: vec![rows.len(), c], data },
            Op::GatherRows { x, rows: rows.to_vec() },
            ng,
            "gather_rows",
        )
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = dims2(self.shape(x));
        let src = self.data(x);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let ng = self.needs(&[x]);
        self.push(Tensor { shape: vec![c, r], data }, Op::Transpose(x), ng, "transpose")
    }

    /// Gradient of the last backward pass for an input or parameter leaf.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// `(name, gradient)` for every parameter leaf touched by the last backward
    /// pass. A parameter bound more than once has its gradients summed.
    pub fn param_grads(&self) -> Vec<(String, Vec<f64>)> {
        let mut out: indexmap::IndexMap<String, Vec<f64>> = indexmap::IndexMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(name) = &node.op {
                if let Some(Some(g)) = self.grads.get(i) {
                    match out.get_mut(name) {
                        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                        None => {
                            out.insert(name.clone(), g.clone());
                        }
                    }
                }
            }
        }
        out.into_iter().collect()
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.data(loss).len() != 1 {
            return Err(Error::shape("backward", format!("loss must be scalar, got {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let is_leaf = matches!(self.nodes[i].op, Op::Input | Op::Param(_));
            if is_leaf {
                grads[i] = Some(g);
            } else {
                self.backprop(i, &g, &mut grads);
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].needs_grad {
                return;
            }
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.data.len()]);
            f(buf);
        };
        let out = &nodes[i].value.data;
        let val = |v: Var| -> &[f64] { &nodes[v.0].value.data };
        match &nodes[i].op {
            Op::Input | Op::Param(_) => {}
            Op::Add(a, b) => {
                acc(*a, &mut |ga| axpy(ga, 1.0, g));
                acc(*b, &mut |gb| axpy(gb, 1.0, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| axpy(ga, 1.0, g));
                acc(*b, &mut |gb| axpy(gb, -1.0, g));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &mut |ga| ga.iter_mut().zip(g).zip(vb).for_each(|((d, gg), y)| *d += gg * y));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).zip(va).for_each(|((d, gg), x)| *d += gg * x));
            }
            Op::Scale(a, s) => acc(*a, &mut |ga| axpy(ga, *s, g)),
            Op::AddScalar(a) | Op::Reshape(a) => acc(*a, &mut |ga| axpy(ga, 1.0, g)),
            Op::AddRowBias(x, b) => {
                acc(*x, &mut |gx| axpy(gx, 1.0, g));
                let c = val(*b).len();
                acc(*b, &mut |gb| {
                    for row in g.chunks(c) {
                        axpy(gb, 1.0, row);
                    }
                });
            }
            Op::AddChannelBias(x, b) => {
                acc(*x, &mut |gx| axpy(gx, 1.0, g));
                let c = val(*b).len();
                let per = g.len() / c.max(1);
                acc(*b, &mut |gb| {
                    for (d, plane) in gb.iter_mut().zip(g.chunks(per.max(1))) {
                        *d += plane.iter().sum::<f64>();
                    }
                });
            }
            &Op::MatMul { a, b, ta, tb, m, k, n } => {
                let (va, vb) = (val(a), val(b));
                acc(a, &mut |ga| {
                    if !ta {
                        gemm(m, n, k, g, false, vb, !tb, ga, 1.0);
                    } else {
                        gemm(k, n, m, vb, tb, g, true, ga, 1.0);
                    }
                });
                acc(b, &mut |gb| {
                    if !tb {
                        gemm(k, m, n, va, !ta, g, false, gb, 1.0);
                    } else {
                        gemm(n, m, k, g, true, va, ta, gb, 1.0);
                    }
                });
            }
            Op::Relu(a) => {
                let x = val(*a);
                acc(*a, &mut |ga| {
                    for ((d, gg), xx) in ga.iter_mut().zip(g).zip(x) {
                        if *xx > 0.0 {
                            *d += gg;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => acc(*a, &mut |ga| {
                ga.iter_mut().zip(g).zip(out).for_each(|((d, gg), y)| *d += gg * y * (1.0 - y))
            }),
            Op::Tanh(a) => acc(*a, &mut |ga| {
                ga.iter_mut().zip(g).zip(out).for_each(|((d, gg), y)| *d += gg * (1.0 - y * y))
            }),
            Op::Exp(a) => acc(*a, &mut |ga| ga.iter_mut().zip(g).zip(out).for_each(|((d, gg), y)| *d += gg * y)),
            Op::Log(a) => {
                let x = val(*a);
                acc(*a, &mut |ga| ga.iter_mut().zip(g).zip(x).for_each(|((d, gg), xx)| *d += gg / xx));
            }
            Op::Square(a) => {
                let x = val(*a);
                acc(*a, &mut |ga| ga.iter_mut().zip(g).zip(x).for_each(|((d, gg), xx)| *d += 2.0 * gg * xx));
            }
            Op::Sum(a) => acc(*a, &mut |ga| ga.iter_mut().for_each(|d| *d += g[0])),
            Op::SoftmaxRows(a) => {
                let c = dims2(&nodes[i].value.shape).1;
                acc(*a, &mut |ga| {
                    for ((dr, gr), yr) in ga.chunks_mut(c).zip(g.chunks(c)).zip(out.chunks(c)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(p, q)| p * q).sum();
                        for ((d, gg), y) in dr.iter_mut().zip(gr).zip(yr) {
                            *d += y * (gg - dot);
                        }
                    }
                });
            }
            Op::LogSoftmaxRows(a) => {
                let c = dims2(&nodes[i].value.shape).1;
                acc(*a, &mut |ga| {
                    for ((dr, gr), yr) in ga.chunks_mut(c).zip(g.chunks(c)).zip(out.chunks(c)) {
                        let total: f64 = gr.iter().sum();
                        for ((d, gg), y) in dr.iter_mut().zip(gr).zip(yr) {
                            *d += gg - y.exp() * total;
                        }
                    }
                });
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = val(*p).len();
                    acc(*p, &mut |gp| axpy(gp, 1.0, &g[off..off + len]));
                    off += len;
                }
            }
            Op::Slice { x, start } => {
                let start = *start;
                acc(*x, &mut |gx| axpy(&mut gx[start..start + g.len()], 1.0, g));
            }
            Op::GatherRows { x, rows } => {
                let c = dims2(&nodes[i].value.shape).1;
                acc(*x, &mut |gx| {
                    for (k, &r) in rows.iter().enumerate() {
                        axpy(&mut gx[r * c..(r + 1) * c], 1.0, &g[k * c..(k + 1) * c]);
                    }
                });
            }
            Op::Transpose(x) => {
                let (r, c) = dims2(&nodes[x.0].value.shape);
                acc(*x, &mut |gx| {
                    for ii in 0..r {
                        for jj in 0..c {
                            gx[ii * c + jj] += g[jj * r + ii];
                        }
                    }
                });
            }
            Op::Conv2d(saved) => super::nn::conv2d_backward(saved, g, nodes, &mut acc),
            Op::MaxPool2 { x, argmax } => acc(*x, &mut |gx| {
                for (gg, &idx) in g.iter().zip(argmax) {
                    gx[idx] += gg;
                }
            }),
            Op::Sample(saved) => super::nn::sample_backward(saved, g, &mut acc),
            Op::LstmCell { gates, c_prev } => super::nn::lstm_backward(*gates, *c_prev, out, g, nodes, &mut acc),
            Op::CrossEntropy { logits, targets, weights } => {
                let c = dims2(&nodes[logits.0].value.shape).1;
                let z = val(*logits);
                acc(*logits, &mut |gz| {
                    for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                        let p = softmax(&z[r * c..(r + 1) * c]);
                        for (j, pj) in p.iter().enumerate() {
                            let y = if j == t { 1.0 } else { 0.0 };
                            gz[r * c + j] += g[0] * w * (pj - y);
                        }
                    }
                });
            }
            Op::BceLogits { logits, targets, weights } => {
                let z = val(*logits);
                acc(*logits, &mut |gz| {
                    for (((d, zz), t), w) in gz.iter_mut().zip(z).zip(targets).zip(weights) {
                        *d += g[0] * w * (sigmoid(*zz) - t);
                    }
                });
            }
            Op::SmoothL1 { x, target, weights, beta } => {
                let xv = val(*x);
                acc(*x, &mut |gx| {
                    for (((d, xx), t), w) in gx.iter_mut().zip(xv).zip(target).zip(weights) {
                        let diff = xx - t;
                        let slope = if diff.abs() < *beta { diff / beta } else { diff.signum() };
                        *d += g[0] * w * slope;
                    }
                });
            }
            Op::Ctc { logits, grad } => acc(*logits, &mut |gz| axpy(gz, g[0], grad)),
        }
    }
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yy, xx) in y.iter_mut().zip(x) {
        *yy += a * xx;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

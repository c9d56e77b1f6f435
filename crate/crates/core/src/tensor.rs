//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] owns every value produced during a forward pass. Operations
//! return lightweight [`Var`] handles into the tape; [`Tape::backward`]
//! walks the recorded nodes in reverse recording order and accumulates
//! gradients for every node that requires them.
//!
//! ```
//! use egsnas::tensor::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Tensor::scalar(3.0));
//! let y = tape.mul(x, x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(x).unwrap().item(), 6.0);
//! ```
//!
//! Binary elementwise ops broadcast their right operand when its shape is a
//! suffix of the left operand's shape, or when it holds a single element.

use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) || numel != data.len() {
            return Err(Error::InvalidShape {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "empty vector tensor");
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// The single value of a one-element tensor.
    ///
    /// # Panics
    /// If the tensor holds more than one element.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    fn like(&self, data: Vec<f64>) -> Self {
        Self {
            shape: self.shape.clone(),
            data,
        }
    }
}

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Differentiable primitive recorded on the tape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    /// `[m, k] x [k, n] -> [m, n]`.
    MatMul,
    Relu,
    Tanh,
    Sigmoid,
    /// Softmax along the last axis.
    Softmax,
    Log,
    Exp,
    /// Elementwise maximum of two same-shape inputs; ties route to the left input.
    Max,
    /// Concatenation along the last axis.
    Concat,
    /// Mean of all elements, shape `[1]`.
    Mean,
    /// Sum of all elements, shape `[1]`.
    Sum,
    /// Mean cross-entropy of `[batch, classes]` logits against `[batch]` class indices.
    CrossEntropyWithLogits,
    Scale(f64),
    /// Element at a flat index, shape `[1]`.
    Index(usize),
    /// Forward value of the second input, gradient passed unchanged to the first.
    StraightThrough,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "multiply",
            OpKind::MatMul => "matmul",
            OpKind::Relu => "relu",
            OpKind::Tanh => "tanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Softmax => "softmax",
            OpKind::Log => "log",
            OpKind::Exp => "exp",
            OpKind::Max => "elementwise-max",
            OpKind::Concat => "concat",
            OpKind::Mean => "mean",
            OpKind::Sum => "sum",
            OpKind::CrossEntropyWithLogits => "cross-entropy-with-logits",
            OpKind::Scale(_) => "scalar-scale",
            OpKind::Index(_) => "index",
            OpKind::StraightThrough => "straight-through",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Option<OpKind>,
    inputs: Vec<Var>,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, present for every node
    /// that requires a gradient.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

fn shape_err(op: OpKind, tensors: &[&Tensor]) -> Error {
    Error::ShapeMismatch {
        op: op.name(),
        shapes: tensors.iter().map(|t| t.shape.clone()).collect(),
    }
}

/// Right operand broadcasts over the left when its shape is a suffix of the
/// left shape or when it is a single element.
fn broadcastable(lhs: &[usize], rhs: &[usize]) -> bool {
    let rhs_numel: usize = rhs.iter().product();
    rhs_numel == 1 || (rhs.len() <= lhs.len() && lhs[lhs.len() - rhs.len()..] == *rhs)
}

fn last_dim(t: &Tensor) -> usize {
    *t.shape.last().expect("tensor shape is never empty")
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

fn softmax_rows(data: &[f64], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for (row, dst) in data.chunks(width).zip(out.chunks_mut(width)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = if v == f64::NEG_INFINITY { 0.0 } else { (v - max).exp() };
            total += *d;
        }
        for d in dst.iter_mut() {
            *d /= total;
        }
    }
    out
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn forward_value(op: OpKind, inputs: &[&Tensor]) -> Result<Tensor> {
    let arity = match op {
        OpKind::Add
        | OpKind::Sub
        | OpKind::Mul
        | OpKind::MatMul
        | OpKind::Max
        | OpKind::CrossEntropyWithLogits
        | OpKind::StraightThrough => Some(2),
        OpKind::Concat => None,
        _ => Some(1),
    };
    if let Some(n) = arity {
        if inputs.len() != n {
            return Err(shape_err(op, inputs));
        }
    } else if inputs.is_empty() {
        return Err(shape_err(op, inputs));
    }

    let a = inputs[0];
    let map = |f: &dyn Fn(f64) -> f64| a.like(a.data.iter().map(|&v| f(v)).collect());
    let out = match op {
        OpKind::Add | OpKind::Sub | OpKind::Mul => {
            let b = inputs[1];
            if !broadcastable(&a.shape, &b.shape) {
                return Err(shape_err(op, inputs));
            }
            let nb = b.numel();
            let data = a
                .data
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let y = b.data[i % nb];
                    match op {
                        OpKind::Add => x + y,
                        OpKind::Sub => x - y,
                        _ => x * y,
                    }
                })
                .collect();
            a.like(data)
        }
        OpKind::MatMul => {
            let b = inputs[1];
            if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
                return Err(shape_err(op, inputs));
            }
            let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
            Tensor {
                shape: vec![m, n],
                data: matmul_raw(&a.data, &b.data, m, k, n),
            }
        }
        OpKind::Relu => map(&|v| v.max(0.0)),
        OpKind::Tanh => map(&f64::tanh),
        OpKind::Sigmoid => map(&sigmoid),
        OpKind::Log => map(&f64::ln),
        OpKind::Exp => map(&f64::exp),
        OpKind::Scale(c) => map(&|v| v * c),
        OpKind::Softmax => a.like(softmax_rows(&a.data, last_dim(a))),
        OpKind::Max => {
            let b = inputs[1];
            if a.shape != b.shape {
                return Err(shape_err(op, inputs));
            }
            a.like(a.data.iter().zip(&b.data).map(|(&x, &y)| x.max(y)).collect())
        }
        OpKind::StraightThrough => {
            let b = inputs[1];
            if a.shape != b.shape {
                return Err(shape_err(op, inputs));
            }
            b.clone()
        }
        OpKind::Concat => {
            let lead = &a.shape[..a.shape.len() - 1];
            if inputs
                .iter()
                .any(|t| t.shape.len() != a.shape.len() || &t.shape[..t.shape.len() - 1] != lead)
            {
                return Err(shape_err(op, inputs));
            }
            let rows: usize = lead.iter().product();
            let width: usize = inputs.iter().map(|t| last_dim(t)).sum();
            let mut data = Vec::with_capacity(rows * width);
            for r in 0..rows {
                for t in inputs {
                    let w = last_dim(t);
                    data.extend_from_slice(&t.data[r * w..(r + 1) * w]);
                }
            }
            let mut shape = lead.to_vec();
            shape.push(width);
            Tensor { shape, data }
        }
        OpKind::Mean => Tensor::scalar(a.data.iter().sum::<f64>() / a.numel() as f64),
        OpKind::Sum => Tensor::scalar(a.data.iter().sum()),
        OpKind::Index(i) => {
            if i >= a.numel() {
                return Err(shape_err(op, inputs));
            }
            Tensor::scalar(a.data[i])
        }
        OpKind::CrossEntropyWithLogits => {
            let labels = inputs[1];
            if a.shape.len() != 2 || labels.shape != [a.shape[0]] {
                return Err(shape_err(op, inputs));
            }
            let (batch, classes) = (a.shape[0], a.shape[1]);
            let mut total = 0.0;
            for r in 0..batch {
                let y = class_index(labels.data[r], classes)?;
                let row = &a.data[r * classes..(r + 1) * classes];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
                total += lse - row[y];
            }
            Tensor::scalar(total / batch as f64)
        }
    };
    Ok(out)
}

fn class_index(label: f64, classes: usize) -> Result<usize> {
    if label >= 0.0 && label.fract() == 0.0 && (label as usize) < classes {
        Ok(label as usize)
    } else {
        Err(Error::InvalidLabel { label, classes })
    }
}

fn accumulate(slot: &mut Option<Tensor>, template: &Tensor, delta: Vec<f64>) {
    match slot {
        Some(g) => {
            for (a, d) in g.data.iter_mut().zip(delta) {
                *a += d;
            }
        }
        None => *slot = Some(template.like(delta)),
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

    /// Records a leaf value.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: None,
            inputs: Vec::new(),
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn node(&self, var: Var) -> Result<&Node> {
        self.nodes.get(var.0).ok_or(Error::UnknownVar(var.0))
    }

    /// Evaluates `op` on `inputs` and records the result. The node carries a
    /// backward rule whenever any input requires a gradient.
    pub fn apply(&mut self, op: OpKind, inputs: &[Var]) -> Result<Var> {
        let mut values = Vec::with_capacity(inputs.len());
        let mut requires_grad = false;
        for &v in inputs {
            let node = self.node(v)?;
            requires_grad |= node.requires_grad;
            values.push(&node.value);
        }
        let value = forward_value(op, &values)?;
        self.nodes.push(Node {
            value,
            op: Some(op),
            inputs: if requires_grad { inputs.to_vec() } else { Vec::new() },
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Mul, &[a, b])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::MatMul, &[a, b])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Relu, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Tanh, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Sigmoid, &[a])
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Softmax, &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Log, &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Exp, &[a])
    }

    pub fn max(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Max, &[a, b])
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        self.apply(OpKind::Concat, parts)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Mean, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Sum, &[a])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.apply(OpKind::Scale(factor), &[a])
    }

    pub fn index(&mut self, a: Var, i: usize) -> Result<Var> {
        self.apply(OpKind::Index(i), &[a])
    }

    pub fn cross_entropy_with_logits(&mut self, logits: Var, labels: Var) -> Result<Var> {
        self.apply(OpKind::CrossEntropyWithLogits, &[logits, labels])
    }

    /// Forward value `hard`, backward identity into `soft`.
    pub fn straight_through(&mut self, soft: Var, hard: Var) -> Result<Var> {
        self.apply(OpKind::StraightThrough, &[soft, hard])
    }

    /// Reverse pass from a scalar `loss`.
    ///
    /// Every node that requires a gradient receives one, zero-filled when the
    /// loss does not depend on it.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = self.node(loss)?;
        if root.value.numel() != 1 {
            return Err(Error::NonScalarLoss {
                shape: root.value.shape.clone(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if root.requires_grad {
            grads[loss.0] = Some(root.value.like(vec![1.0]));
        }
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Some(op) = node.op else { continue };
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(op, node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (slot, node) in grads.iter_mut().zip(&self.nodes) {
            if node.requires_grad && slot.is_none() {
                *slot = Some(Tensor::zeros(node.value.shape.clone()));
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, op: OpKind, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let ins = &node.inputs;
        let val = |i: usize| &self.nodes[ins[i].0].value;
        let wants = |i: usize| self.nodes[ins[i].0].requires_grad;
        let y = &node.value;
        let gd = &g.data;

        let unary = |grads: &mut [Option<Tensor>], delta: Vec<f64>| {
            accumulate(&mut grads[ins[0].0], val(0), delta);
        };

        match op {
            OpKind::Add | OpKind::Sub | OpKind::Mul => {
                let (a, b) = (val(0), val(1));
                let nb = b.numel();
                if wants(0) {
                    let delta = match op {
                        OpKind::Mul => gd
                            .iter()
                            .enumerate()
                            .map(|(i, &gv)| gv * b.data[i % nb])
                            .collect(),
                        _ => gd.clone(),
                    };
                    accumulate(&mut grads[ins[0].0], a, delta);
                }
                if wants(1) {
                    let mut delta = vec![0.0; nb];
                    for (i, &gv) in gd.iter().enumerate() {
                        delta[i % nb] += match op {
                            OpKind::Add => gv,
                            OpKind::Sub => -gv,
                            _ => gv * a.data[i],
                        };
                    }
                    accumulate(&mut grads[ins[1].0], b, delta);
                }
            }
            OpKind::MatMul => {
                let (a, b) = (val(0), val(1));
                let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
                if wants(0) {
                    let bt = transpose(&b.data, k, n);
                    accumulate(&mut grads[ins[0].0], a, matmul_raw(gd, &bt, m, n, k));
                }
                if wants(1) {
                    let at = transpose(&a.data, m, k);
                    accumulate(&mut grads[ins[1].0], b, matmul_raw(&at, gd, k, m, n));
                }
            }
            OpKind::Relu => {
                let x = val(0);
                unary(
                    grads,
                    gd.iter()
                        .zip(&x.data)
                        .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                        .collect(),
                );
            }
            OpKind::Tanh => unary(
                grads,
                gd.iter().zip(&y.data).map(|(&gv, &yv)| gv * (1.0 - yv * yv)).collect(),
            ),
            OpKind::Sigmoid => unary(
                grads,
                gd.iter().zip(&y.data).map(|(&gv, &yv)| gv * yv * (1.0 - yv)).collect(),
            ),
            OpKind::Exp => unary(grads, gd.iter().zip(&y.data).map(|(&gv, &yv)| gv * yv).collect()),
            OpKind::Log => {
                let x = val(0);
                unary(grads, gd.iter().zip(&x.data).map(|(&gv, &xv)| gv / xv).collect());
            }
            OpKind::Scale(c) => unary(grads, gd.iter().map(|&gv| gv * c).collect()),
            OpKind::Softmax => {
                let width = last_dim(y);
                let mut delta = vec![0.0; gd.len()];
                for ((yr, gr), dr) in y
                    .data
                    .chunks(width)
                    .zip(gd.chunks(width))
                    .zip(delta.chunks_mut(width))
                {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((d, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                        *d = yv * (gv - dot);
                    }
                }
                unary(grads, delta);
            }
            OpKind::Max => {
                let (a, b) = (val(0), val(1));
                let left: Vec<bool> = a.data.iter().zip(&b.data).map(|(x, y)| x >= y).collect();
                if wants(0) {
                    let delta = gd.iter().zip(&left).map(|(&gv, &l)| if l { gv } else { 0.0 }).collect();
                    accumulate(&mut grads[ins[0].0], a, delta);
                }
                if wants(1) {
                    let delta = gd.iter().zip(&left).map(|(&gv, &l)| if l { 0.0 } else { gv }).collect();
                    accumulate(&mut grads[ins[1].0], b, delta);
                }
            }
            OpKind::StraightThrough => {
                if wants(0) {
                    accumulate(&mut grads[ins[0].0], val(0), gd.clone());
                }
            }
            OpKind::Concat => {
                let total = last_dim(y);
                let rows = y.numel() / total;
                let mut offset = 0;
                for (slot, &input) in ins.iter().enumerate() {
                    let t = val(slot);
                    let w = last_dim(t);
                    if wants(slot) {
                        let mut delta = Vec::with_capacity(t.numel());
                        for r in 0..rows {
                            delta.extend_from_slice(&gd[r * total + offset..r * total + offset + w]);
                        }
                        accumulate(&mut grads[input.0], t, delta);
                    }
                    offset += w;
                }
            }
            OpKind::Mean => {
                let x = val(0);
                let v = gd[0] / x.numel() as f64;
                unary(grads, vec![v; x.numel()]);
            }
            OpKind::Sum => {
                let x = val(0);
                unary(grads, vec![gd[0]; x.numel()]);
            }
            OpKind::Index(i) => {
                let x = val(0);
                let mut delta = vec![0.0; x.numel()];
                delta[i] = gd[0];
                unary(grads, delta);
            }
            OpKind::CrossEntropyWithLogits => {
                if wants(0) {
                    let (z, labels) = (val(0), val(1));
                    let (batch, classes) = (z.shape[0], z.shape[1]);
                    let mut delta = softmax_rows(&z.data, classes);
                    let s = gd[0] / batch as f64;
                    for r in 0..batch {
                        // label validity was checked in the forward pass
                        let y = labels.data[r] as usize;
                        delta[r * classes + y] -= 1.0;
                        for d in &mut delta[r * classes..(r + 1) * classes] {
                            *d *= s;
                        }
                    }
                    accumulate(&mut grads[ins[0].0], z, delta);
                }
            }
        }
    }
}

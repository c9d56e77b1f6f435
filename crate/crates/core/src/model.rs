//! Classifier built around one searched cell: a linear stem into the hidden
//! width, the cell, and a linear head over the cell output.

use crate::error::Result;
use crate::gumbel::RngState;
use crate::space::{cell_forward, edge_count, CellVars, EdgeWeights, LinearVars, OutputRule, Primitive};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelDims {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
    pub nodes: usize,
    pub ops: Vec<Primitive>,
    pub output: OutputRule,
    /// Standardize every intermediate node over the batch.
    pub normalize_nodes: bool,
}

impl ModelDims {
    fn head_input(&self) -> usize {
        match self.output {
            OutputRule::Sum => self.hidden,
            OutputRule::Concat => self.hidden * (self.nodes - 1),
        }
    }
}

/// Network weights plus the index of each edge op's weight pair.
#[derive(Debug, Clone)]
pub struct SuperNet {
    pub dims: ModelDims,
    /// `slots[edge][k]` indexes the weight matrix; the bias follows it.
    slots: Vec<Vec<Option<usize>>>,
    pub weights: Vec<Tensor>,
}

/// Tape handles for one forward pass.
#[derive(Debug, Clone)]
pub struct NetVars {
    pub all: Vec<Var>,
    stem: LinearVars,
    head: LinearVars,
    cell: CellVars,
}

const STEM: usize = 0;
const HEAD: usize = 2;

fn glorot(rng: &mut RngState, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| (2.0 * rng.uniform() - 1.0) * limit)
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("positive dims")
}

impl SuperNet {
    /// Fresh Glorot-uniform weights and zero biases.
    pub fn new(dims: ModelDims, rng: &mut RngState) -> Self {
        let mut weights = vec![
            glorot(rng, dims.input, dims.hidden),
            Tensor::zeros(vec![dims.hidden]),
            glorot(rng, dims.head_input(), dims.classes),
            Tensor::zeros(vec![dims.classes]),
        ];
        let mut slots = Vec::with_capacity(edge_count(dims.nodes));
        for _ in 0..edge_count(dims.nodes) {
            let mut edge = Vec::with_capacity(dims.ops.len());
            for op in &dims.ops {
                if op.is_parametric() {
                    edge.push(Some(weights.len()));
                    weights.push(glorot(rng, dims.hidden, dims.hidden));
                    weights.push(Tensor::zeros(vec![dims.hidden]));
                } else {
                    edge.push(None);
                }
            }
            slots.push(edge);
        }
        Self { dims, slots, weights }
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(Tensor::numel).sum()
    }

    /// Records the weights on `tape`, as parameters when `trainable`.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> NetVars {
        let all: Vec<Var> = self
            .weights
            .iter()
            .map(|w| tape.leaf(w.clone(), trainable))
            .collect();
        let pair = |i: usize| LinearVars {
            weight: all[i],
            bias: all[i + 1],
        };
        let cell = CellVars {
            ops: self
                .slots
                .iter()
                .map(|edge| edge.iter().map(|s| s.map(pair)).collect())
                .collect(),
        };
        NetVars {
            stem: pair(STEM),
            head: pair(HEAD),
            cell,
            all,
        }
    }

    /// Class logits `[batch, classes]`.
    pub fn forward(&self, tape: &mut Tape, vars: &NetVars, x: Var, edges: &[EdgeWeights]) -> Result<Var> {
        let h = tape.matmul(x, vars.stem.weight)?;
        let h = tape.add(h, vars.stem.bias)?;
        let c = cell_forward(
            tape,
            self.dims.nodes,
            &self.dims.ops,
            self.dims.output,
            self.dims.normalize_nodes,
            &vars.cell,
            h,
            edges,
        )?;
        let z = tape.matmul(c, vars.head.weight)?;
        tape.add(z, vars.head.bias)
    }
}

/// Heavy-ball gradient descent: `v <- mu v + g`, `w <- w - lr v`.
///
/// With `clip_norm` set, the gradient is first rescaled so its global L2
/// norm is at most that value.
#[derive(Debug, Clone)]
pub struct Momentum {
    pub lr: f64,
    pub momentum: f64,
    pub clip_norm: Option<f64>,
    velocity: Vec<Tensor>,
}

impl Momentum {
    pub fn new(lr: f64, momentum: f64, params: &[Tensor]) -> Self {
        Self {
            lr,
            momentum,
            clip_norm: None,
            velocity: params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
        }
    }

    pub fn with_clip(mut self, clip_norm: Option<f64>) -> Self {
        self.clip_norm = clip_norm;
        self
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[&Tensor]) {
        let scale = match self.clip_norm {
            Some(c) => {
                let norm = grads
                    .iter()
                    .flat_map(|g| g.data())
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
                if norm > c { c / norm } else { 1.0 }
            }
            None => 1.0,
        };
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grads) {
            for ((pv, vv), gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                *vv = self.momentum * *vv + scale * gv;
                *pv -= self.lr * *vv;
            }
        }
    }
}

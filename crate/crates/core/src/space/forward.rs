use crate::egs::RelaxedEdgeCode;
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

use super::{edge_index, EdgeProbabilities, OutputRule, Primitive};

/// Weight matrix `[d, d]` and bias `[d]` of a linear op.
#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

/// Tape handles of every edge op's parameters, `ops[edge][k]`.
#[derive(Debug, Clone, Default)]
pub struct CellVars {
    pub ops: Vec<Vec<Option<LinearVars>>>,
}

/// Op weights applied on one edge.
#[derive(Debug, Clone)]
pub enum EdgeWeights {
    /// A fixed binary code. Inactive ops are not evaluated.
    Fixed(Vec<bool>),
    /// A sampled code whose weights live on the tape.
    Relaxed(RelaxedEdgeCode),
}

impl EdgeWeights {
    pub fn bits(&self) -> &[bool] {
        match self {
            EdgeWeights::Fixed(bits) => bits,
            EdgeWeights::Relaxed(r) => &r.hard,
        }
    }
}

fn apply_primitive(tape: &mut Tape, op: Primitive, x: Var, params: Option<&LinearVars>) -> Result<Option<Var>> {
    let linear = |tape: &mut Tape| -> Result<Var> {
        let p = params.ok_or_else(|| Error::DimensionMismatch {
            expected: format!("parameters for {op}"),
            found: "none".into(),
        })?;
        let h = tape.matmul(x, p.weight)?;
        tape.add(h, p.bias)
    };
    Ok(match op {
        Primitive::Zero => None,
        Primitive::Identity => Some(x),
        Primitive::LinearRelu => {
            let h = linear(tape)?;
            Some(tape.relu(h)?)
        }
        Primitive::LinearTanh => {
            let h = linear(tape)?;
            Some(tape.tanh(h)?)
        }
        Primitive::LinearSigmoid => {
            let h = linear(tape)?;
            Some(tape.sigmoid(h)?)
        }
    })
}

/// Mixed operation on one edge: `sum_k w_k * o_k(x)`.
pub fn edge_forward(
    tape: &mut Tape,
    x: Var,
    weights: &EdgeWeights,
    ops: &[Primitive],
    params: &[Option<LinearVars>],
) -> Result<Var> {
    if weights.bits().len() != ops.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} op weights", ops.len()),
            found: weights.bits().len().to_string(),
        });
    }
    let mut acc: Option<Var> = None;
    for (k, &op) in ops.iter().enumerate() {
        if let EdgeWeights::Fixed(bits) = weights {
            if !bits[k] {
                continue;
            }
        }
        let Some(out) = apply_primitive(tape, op, x, params.get(k).and_then(Option::as_ref))? else {
            continue;
        };
        let term = match weights {
            EdgeWeights::Fixed(_) => out,
            EdgeWeights::Relaxed(r) => {
                let w = tape.index(r.weights, k)?;
                tape.mul(out, w)?
            }
        };
        acc = Some(match acc {
            None => term,
            Some(prev) => tape.add(prev, term)?,
        });
    }
    match acc {
        Some(v) => Ok(v),
        None => {
            let shape = tape.value(x).shape().to_vec();
            Ok(tape.constant(Tensor::zeros(shape)))
        }
    }
}

pub const STANDARDIZE_EPS: f64 = 1e-5;

/// Per-column standardization of a `[batch, features]` value over the batch,
/// without affine parameters. Batches of one row pass through unchanged.
pub fn standardize_batch(tape: &mut Tape, x: Var) -> Result<Var> {
    let shape = tape.value(x).shape().to_vec();
    let [b, _] = shape[..] else {
        return Err(Error::DimensionMismatch {
            expected: "[batch, features]".into(),
            found: format!("{shape:?}"),
        });
    };
    if b < 2 {
        return Ok(x);
    }
    let inv_b = 1.0 / b as f64;
    let mut centering = vec![-inv_b; b * b];
    for i in 0..b {
        centering[i * b + i] += 1.0;
    }
    let centering = tape.constant(Tensor::new(vec![b, b], centering)?);
    let centered = tape.matmul(centering, x)?;
    let sq = tape.mul(centered, centered)?;
    let avg = tape.constant(Tensor::new(vec![1, b], vec![inv_b; b])?);
    let var = tape.matmul(avg, sq)?;
    let eps = tape.constant(Tensor::scalar(STANDARDIZE_EPS));
    let var = tape.add(var, eps)?;
    let log_var = tape.log(var)?;
    let half = tape.scale(log_var, -0.5)?;
    let inv_std = tape.exp(half)?;
    let ones = tape.constant(Tensor::new(vec![b, 1], vec![1.0; b])?);
    let rows = tape.matmul(ones, inv_std)?;
    tape.mul(centered, rows)
}

/// Evaluates the cell on `x_in`. Node `j` sums the edge outputs from all
/// nodes `i < j`; the cell output aggregates nodes `1..n`. With `normalize`,
/// every intermediate node is passed through [`standardize_batch`].
#[allow(clippy::too_many_arguments)]
pub fn cell_forward(
    tape: &mut Tape,
    nodes: usize,
    ops: &[Primitive],
    output: OutputRule,
    normalize: bool,
    params: &CellVars,
    x_in: Var,
    samples: &[EdgeWeights],
) -> Result<Var> {
    let edges = super::edge_count(nodes);
    if samples.len() < edges {
        return Err(Error::MissingEdgeSample(samples.len()));
    }
    let no_params: Vec<Option<LinearVars>> = Vec::new();
    let mut values: Vec<Var> = Vec::with_capacity(nodes);
    values.push(x_in);
    for j in 1..nodes {
        let mut node: Option<Var> = None;
        for i in 0..j {
            let e = edge_index(i, j);
            let p = params.ops.get(e).unwrap_or(&no_params);
            let out = edge_forward(tape, values[i], &samples[e], ops, p)?;
            node = Some(match node {
                None => out,
                Some(prev) => tape.add(prev, out)?,
            });
        }
        let node = node.expect("every non-input node has an incoming edge");
        values.push(if normalize { standardize_batch(tape, node)? } else { node });
    }
    match output {
        OutputRule::Sum => {
            let mut acc = values[1];
            for &v in &values[2..] {
                acc = tape.add(acc, v)?;
            }
            Ok(acc)
        }
        OutputRule::Concat => tape.concat(&values[1..]),
    }
}

/// `ln(lambda * softmax(logits) + (1 - lambda) * l)` on the tape.
pub fn log_probabilities_var(tape: &mut Tape, logits: Var, edge: &EdgeProbabilities) -> Result<Var> {
    let h = tape.softmax(logits)?;
    let scaled = tape.scale(h, edge.lambda)?;
    let l = tape.constant(Tensor::vector(
        edge.efficiency.iter().map(|v| v * (1.0 - edge.lambda)).collect(),
    ));
    let p = tape.add(scaled, l)?;
    tape.log(p)
}

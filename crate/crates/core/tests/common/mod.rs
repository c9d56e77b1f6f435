#![allow(dead_code)]

use egsnas::gumbel::RngState;
use egsnas::tensor::{OpKind, Tape, Tensor};

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_TOL: f64 = 1e-7;

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn central_differences(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= ABS_TOL || diff <= REL_TOL * analytic.abs().max(numeric.abs())
}

/// Largest violation of the gradient tolerance, as a readable message.
pub fn gradient_mismatch(analytic: &[f64], numeric: &[f64]) -> Option<String> {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .enumerate()
        .find(|(_, (a, n))| !close(**a, **n))
        .map(|(i, (a, n))| format!("coordinate {i}: analytic {a} vs numeric {n}"))
}

pub fn uniform_vec(rng: &mut RngState, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| lo + (hi - lo) * rng.uniform()).collect()
}

pub fn random_tensor(rng: &mut RngState, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), uniform_vec(rng, n, lo, hi)).unwrap()
}

/// Values in `[lo, hi]` kept at least `gap` away from each other, so
/// kinks (relu at 0, max ties) sit outside the difference stencil.
pub fn separated_vec(rng: &mut RngState, len: usize, lo: f64, hi: f64, gap: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let v = lo + (hi - lo) * rng.uniform();
        if out.iter().all(|u: &f64| (u - v).abs() > gap) {
            out.push(v);
        }
    }
    out
}

/// Binomial standard error of a frequency estimate.
pub fn sigma(q: f64, n: usize) -> f64 {
    (q * (1.0 - q) / n as f64).sqrt()
}

pub fn within_sigmas(empirical: f64, q: f64, n: usize, k: f64) -> bool {
    let s = sigma(q, n);
    if s == 0.0 {
        empirical == q
    } else {
        (empirical - q).abs() <= k * s
    }
}

/// One randomly drawn application of an op: its inputs and which of them
/// are differentiated.
pub struct OpInstance {
    pub op: OpKind,
    pub inputs: Vec<Tensor>,
    pub differentiable: Vec<bool>,
}

/// Every op kind with a finite-difference-checkable gradient. The
/// straight-through op is excluded: its backward rule deliberately differs
/// from the derivative of its forward value.
pub fn checked_ops() -> Vec<OpKind> {
    vec![
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::MatMul,
        OpKind::Relu,
        OpKind::Tanh,
        OpKind::Sigmoid,
        OpKind::Softmax,
        OpKind::Log,
        OpKind::Exp,
        OpKind::Max,
        OpKind::Concat,
        OpKind::Mean,
        OpKind::Sum,
        OpKind::CrossEntropyWithLogits,
        OpKind::Scale(0.0),
        OpKind::Index(0),
    ]
}

pub fn op_instance(kind: &OpKind, rng: &mut RngState) -> OpInstance {
    let rows = 1 + rng.below(3);
    let cols = 1 + rng.below(4);
    let t = |rng: &mut RngState, shape: &[usize], lo: f64, hi: f64| random_tensor(rng, shape, lo, hi);
    let one = |op: OpKind, x: Tensor| OpInstance {
        op,
        inputs: vec![x],
        differentiable: vec![true],
    };
    match kind {
        OpKind::Add | OpKind::Sub | OpKind::Mul => {
            let a = t(rng, &[rows, cols], -2.0, 2.0);
            let b = match rng.below(3) {
                0 => t(rng, &[rows, cols], -2.0, 2.0),
                1 => t(rng, &[cols], -2.0, 2.0),
                _ => t(rng, &[1], -2.0, 2.0),
            };
            OpInstance {
                op: *kind,
                inputs: vec![a, b],
                differentiable: vec![true, true],
            }
        }
        OpKind::MatMul => {
            let inner = 1 + rng.below(4);
            OpInstance {
                op: OpKind::MatMul,
                inputs: vec![t(rng, &[rows, inner], -1.5, 1.5), t(rng, &[inner, cols], -1.5, 1.5)],
                differentiable: vec![true, true],
            }
        }
        OpKind::Relu => {
            let n = rows * cols;
            let data = uniform_vec(rng, n, 0.01, 2.0)
                .into_iter()
                .map(|v| if rng.coin() { v } else { -v })
                .collect();
            one(OpKind::Relu, Tensor::new(vec![rows, cols], data).unwrap())
        }
        OpKind::Tanh | OpKind::Sigmoid | OpKind::Exp | OpKind::Softmax => one(*kind, t(rng, &[rows, cols], -2.0, 2.0)),
        OpKind::Log => one(OpKind::Log, t(rng, &[rows, cols], 0.2, 3.0)),
        OpKind::Max => {
            let n = rows * cols;
            let a = uniform_vec(rng, n, -2.0, 2.0);
            let b: Vec<f64> = a
                .iter()
                .map(|&v| {
                    let d = 0.01 + rng.uniform();
                    if rng.coin() { v + d } else { v - d }
                })
                .collect();
            OpInstance {
                op: OpKind::Max,
                inputs: vec![
                    Tensor::new(vec![rows, cols], a).unwrap(),
                    Tensor::new(vec![rows, cols], b).unwrap(),
                ],
                differentiable: vec![true, true],
            }
        }
        OpKind::Concat => {
            let parts = 1 + rng.below(3);
            let inputs: Vec<Tensor> = (0..parts)
                .map(|_| {
                    let c = 1 + rng.below(3);
                    t(rng, &[rows, c], -2.0, 2.0)
                })
                .collect();
            OpInstance {
                op: OpKind::Concat,
                differentiable: vec![true; inputs.len()],
                inputs,
            }
        }
        OpKind::Mean | OpKind::Sum => one(*kind, t(rng, &[rows, cols], -2.0, 2.0)),
        OpKind::CrossEntropyWithLogits => {
            let classes = 2 + rng.below(3);
            let labels = (0..rows).map(|_| rng.below(classes) as f64).collect();
            OpInstance {
                op: OpKind::CrossEntropyWithLogits,
                inputs: vec![t(rng, &[rows, classes], -3.0, 3.0), Tensor::vector(labels)],
                differentiable: vec![true, false],
            }
        }
        OpKind::Scale(_) => one(OpKind::Scale(-3.0 + 6.0 * rng.uniform()), t(rng, &[rows, cols], -2.0, 2.0)),
        OpKind::Index(_) => {
            let x = t(rng, &[rows, cols], -2.0, 2.0);
            let i = rng.below(x.numel());
            one(OpKind::Index(i), x)
        }
        OpKind::StraightThrough => unreachable!("not finite-difference checkable"),
    }
}

/// `sum(op(inputs) * c)` for a fixed random projection `c`, returning the
/// loss and, when requested, the gradient for each differentiable input.
pub fn projected_loss(inst: &OpInstance, inputs: &[Tensor], projection: &[f64], grads: bool) -> (f64, Vec<Vec<f64>>) {
    let mut tape = Tape::new();
    let vars: Vec<_> = inputs
        .iter()
        .zip(&inst.differentiable)
        .map(|(x, &d)| tape.leaf(x.clone(), d))
        .collect();
    let out = tape.apply(inst.op, &vars).unwrap();
    let shape = tape.value(out).shape().to_vec();
    let c = tape.constant(Tensor::new(shape, projection.to_vec()).unwrap());
    let weighted = tape.mul(out, c).unwrap();
    let loss = tape.sum(weighted).unwrap();
    let value = tape.value(loss).item();
    if !grads {
        return (value, Vec::new());
    }
    let g = tape.backward(loss).unwrap();
    let out = vars
        .iter()
        .zip(&inst.differentiable)
        .map(|(&v, &d)| if d { g.get(v).unwrap().data().to_vec() } else { Vec::new() })
        .collect();
    (value, out)
}

/// Checks one instance; `Err` carries the first mismatch.
pub fn check_instance(inst: &OpInstance, rng: &mut RngState) -> Result<(), String> {
    let mut tape = Tape::new();
    let vars: Vec<_> = inst.inputs.iter().map(|x| tape.constant(x.clone())).collect();
    let out = tape.apply(inst.op, &vars).map_err(|e| e.to_string())?;
    let projection = uniform_vec(rng, tape.value(out).numel(), -1.0, 1.0);
    let (_, analytic) = projected_loss(inst, &inst.inputs, &projection, true);
    for (slot, input) in inst.inputs.iter().enumerate() {
        if !inst.differentiable[slot] {
            continue;
        }
        let numeric = central_differences(input.data(), |x| {
            let mut perturbed = inst.inputs.clone();
            perturbed[slot] = Tensor::new(input.shape().to_vec(), x.to_vec()).unwrap();
            projected_loss(inst, &perturbed, &projection, false).0
        });
        if let Some(msg) = gradient_mismatch(&analytic[slot], &numeric) {
            return Err(format!("{} input {slot}: {msg}", inst.op.name()));
        }
    }
    Ok(())
}

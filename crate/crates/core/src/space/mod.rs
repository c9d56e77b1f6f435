//! Cell search space: candidate primitives, binary architecture codes over
//! DAG edges, edge probabilities and the relaxed mixed-operation forward pass.
//!
//! Nodes are numbered from 0 (the input node). Edge `(i, j)` with `i < j`
//! carries information from node `i` to node `j`; edges are stored in the
//! order `(0,1), (0,2), (1,2), (0,3), ...`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::egs::CodeMask;
use crate::error::{Error, Result};
use crate::gumbel::{validate_simplex, SIMPLEX_TOL};

mod export;
mod forward;

pub use export::{ArchitectureDocument, EdgeBits};
pub use forward::{cell_forward, edge_forward, log_probabilities_var, CellVars, EdgeWeights, LinearVars};

/// Default mixing weight between effectiveness and efficiency credits.
pub const DEFAULT_LAMBDA: f64 = 0.5;

/// Candidate operation on an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    Zero,
    Identity,
    LinearRelu,
    LinearTanh,
    LinearSigmoid,
}

impl Primitive {
    pub const ALL: [Primitive; 5] = [
        Primitive::Zero,
        Primitive::Identity,
        Primitive::LinearRelu,
        Primitive::LinearTanh,
        Primitive::LinearSigmoid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::Zero => "zero",
            Primitive::Identity => "identity",
            Primitive::LinearRelu => "linear_relu",
            Primitive::LinearTanh => "linear_tanh",
            Primitive::LinearSigmoid => "linear_sigmoid",
        }
    }

    /// Relative compute credit.
    pub fn cost(self) -> f64 {
        match self {
            Primitive::Zero => 0.0,
            Primitive::Identity => 0.1,
            _ => 1.0,
        }
    }

    /// Whether the op owns a weight matrix and bias.
    pub fn is_parametric(self) -> bool {
        matches!(
            self,
            Primitive::LinearRelu | Primitive::LinearTanh | Primitive::LinearSigmoid
        )
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Primitive {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Primitive::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown primitive `{s}`")))
    }
}

pub fn edge_count(nodes: usize) -> usize {
    nodes * nodes.saturating_sub(1) / 2
}

/// Storage index of edge `(i, j)`.
pub fn edge_index(i: usize, j: usize) -> usize {
    debug_assert!(i < j);
    j * (j - 1) / 2 + i
}

/// All edges `(i, j)` in storage order.
pub fn edge_pairs(nodes: usize) -> Vec<(usize, usize)> {
    (1..nodes).flat_map(|j| (0..j).map(move |i| (i, j))).collect()
}

/// Binary indicator over `(edge, op)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArchitectureCode {
    nodes: usize,
    ops: usize,
    bits: Vec<bool>,
}

impl ArchitectureCode {
    pub fn zeros(nodes: usize, ops: usize) -> Result<Self> {
        if nodes < 2 {
            return Err(Error::DimensionMismatch {
                expected: "at least 2 nodes".into(),
                found: nodes.to_string(),
            });
        }
        if !(1..=32).contains(&ops) {
            return Err(Error::DimensionMismatch {
                expected: "between 1 and 32 ops".into(),
                found: ops.to_string(),
            });
        }
        Ok(Self {
            nodes,
            ops,
            bits: vec![false; edge_count(nodes) * ops],
        })
    }

    pub fn from_edge_masks(nodes: usize, ops: usize, masks: &[CodeMask]) -> Result<Self> {
        let mut code = Self::zeros(nodes, ops)?;
        if masks.len() != code.edge_count() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} edge codes", code.edge_count()),
                found: masks.len().to_string(),
            });
        }
        for (e, m) in masks.iter().enumerate() {
            if m.0 >> ops != 0 {
                return Err(Error::IndexOutOfRange {
                    what: "op",
                    index: 31 - m.0.leading_zeros() as usize,
                    bound: ops,
                });
            }
            for k in 0..ops {
                code.bits[e * ops + k] = m.contains(k);
            }
        }
        Ok(code)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn ops(&self) -> usize {
        self.ops
    }

    pub fn edge_count(&self) -> usize {
        edge_count(self.nodes)
    }

    fn check(&self, i: usize, j: usize, k: usize) -> Result<usize> {
        if j >= self.nodes {
            return Err(Error::IndexOutOfRange {
                what: "node",
                index: j,
                bound: self.nodes,
            });
        }
        if i >= j {
            return Err(Error::IndexOutOfRange {
                what: "edge source",
                index: i,
                bound: j,
            });
        }
        if k >= self.ops {
            return Err(Error::IndexOutOfRange {
                what: "op",
                index: k,
                bound: self.ops,
            });
        }
        Ok(edge_index(i, j) * self.ops + k)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Result<bool> {
        Ok(self.bits[self.check(i, j, k)?])
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: bool) -> Result<()> {
        let idx = self.check(i, j, k)?;
        self.bits[idx] = value;
        Ok(())
    }

    /// Bits of edge number `edge` in storage order.
    pub fn edge_bits(&self, edge: usize) -> &[bool] {
        &self.bits[edge * self.ops..(edge + 1) * self.ops]
    }

    pub fn edge_mask(&self, edge: usize) -> CodeMask {
        CodeMask::from_bits(self.edge_bits(edge))
    }

    pub fn edge_masks(&self) -> Vec<CodeMask> {
        (0..self.edge_count()).map(|e| self.edge_mask(e)).collect()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// One `0`/`1` string per edge, separated by `|`.
    pub fn render(&self) -> String {
        (0..self.edge_count())
            .map(|e| self.edge_mask(e).render(self.ops))
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// Explicit network description: the set of op indices active on each edge.
///
/// Edges with no active op are absent from the map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    pub nodes: usize,
    pub ops: Vec<Primitive>,
    pub edges: BTreeMap<(usize, usize), BTreeSet<usize>>,
}

impl Network {
    pub fn empty(nodes: usize, ops: Vec<Primitive>) -> Self {
        Self {
            nodes,
            ops,
            edges: BTreeMap::new(),
        }
    }

    /// Activates op `k` on edge `(i, j)`.
    pub fn with_op(mut self, i: usize, j: usize, k: usize) -> Self {
        self.edges.entry((i, j)).or_default().insert(k);
        self
    }

    /// Per-edge fixed weights, in edge storage order.
    pub fn edge_weights(&self) -> Vec<EdgeWeights> {
        edge_pairs(self.nodes)
            .into_iter()
            .map(|pair| {
                let mut bits = vec![false; self.ops.len()];
                if let Some(active) = self.edges.get(&pair) {
                    for &k in active {
                        bits[k] = true;
                    }
                }
                EdgeWeights::Fixed(bits)
            })
            .collect()
    }
}

/// Bit `(i, j, k)` is set iff op `k` is active on edge `(i, j)`.
pub fn encode(network: &Network) -> Result<ArchitectureCode> {
    let mut code = ArchitectureCode::zeros(network.nodes, network.ops.len())?;
    for (&(i, j), active) in &network.edges {
        for &k in active {
            code.set(i, j, k, true)?;
        }
    }
    Ok(code)
}

pub fn decode(code: &ArchitectureCode, ops: &[Primitive]) -> Result<Network> {
    if code.ops != ops.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} ops", ops.len()),
            found: format!("code with {} ops", code.ops),
        });
    }
    let mut edges = BTreeMap::new();
    for (e, pair) in edge_pairs(code.nodes).into_iter().enumerate() {
        let active: BTreeSet<usize> = (0..code.ops).filter(|&k| code.edge_bits(e)[k]).collect();
        if !active.is_empty() {
            edges.insert(pair, active);
        }
    }
    Ok(Network {
        nodes: code.nodes,
        ops: ops.to_vec(),
        edges,
    })
}

/// Convex combination `lambda * h + (1 - lambda) * l` of two credit vectors.
pub fn mix_probabilities(h: &[f64], l: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if h.len() != l.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} credits", h.len()),
            found: l.len().to_string(),
        });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidProbabilities(format!("mixing weight {lambda} outside [0, 1]")));
    }
    validate_simplex(h)?;
    validate_simplex(l)?;
    Ok(h.iter().zip(l).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect())
}

pub fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Static efficiency credits: softmax of negated op costs.
pub fn efficiency_credits(ops: &[Primitive]) -> Vec<f64> {
    softmax(&ops.iter().map(|p| -p.cost()).collect::<Vec<_>>())
}

/// Trainable per-edge distribution over candidate ops.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeProbabilities {
    /// Effectiveness logits; their softmax is the effectiveness credit.
    pub logits: Vec<f64>,
    pub efficiency: Vec<f64>,
    pub lambda: f64,
}

impl EdgeProbabilities {
    pub fn new(ops: &[Primitive], lambda: f64) -> Self {
        Self {
            logits: vec![0.0; ops.len()],
            efficiency: efficiency_credits(ops),
            lambda,
        }
    }

    pub fn effectiveness(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let h = self.effectiveness();
        h.iter()
            .zip(&self.efficiency)
            .map(|(a, b)| self.lambda * a + (1.0 - self.lambda) * b)
            .collect()
    }
}

/// How intermediate node outputs are aggregated into the cell output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputRule {
    #[default]
    Sum,
    Concat,
}

impl FromStr for OutputRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(OutputRule::Sum),
            "concat" => Ok(OutputRule::Concat),
            other => Err(Error::Parse(format!("unknown output rule `{other}`"))),
        }
    }
}

/// Ordered DAG of nodes with a distribution over ops on every edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub nodes: usize,
    pub ops: Vec<Primitive>,
    pub edges: Vec<EdgeProbabilities>,
    pub output: OutputRule,
}

impl Cell {
    pub fn new(nodes: usize, ops: Vec<Primitive>, lambda: f64, output: OutputRule) -> Result<Self> {
        if nodes < 2 {
            return Err(Error::DimensionMismatch {
                expected: "at least 2 nodes".into(),
                found: nodes.to_string(),
            });
        }
        if ops.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: "at least one op".into(),
                found: "0".into(),
            });
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidProbabilities(format!("mixing weight {lambda} outside [0, 1]")));
        }
        let edges = (0..edge_count(nodes))
            .map(|_| EdgeProbabilities::new(&ops, lambda))
            .collect();
        Ok(Self {
            nodes,
            ops,
            edges,
            output,
        })
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn op_count(&self) -> usize {
        self.ops.len()
    }

    /// Mixed probabilities of every edge.
    pub fn probabilities(&self) -> Vec<Vec<f64>> {
        self.edges.iter().map(EdgeProbabilities::probabilities).collect()
    }
}

/// Whether `p` lies on the simplex within the shared tolerance.
pub fn on_simplex(p: &[f64]) -> bool {
    p.iter().all(|&v| v >= -SIMPLEX_TOL) && (p.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ops2() -> Vec<Primitive> {
        vec![Primitive::Zero, Primitive::Identity]
    }

    #[test]
    fn edge_indices_follow_storage_order() {
        let pairs = edge_pairs(4);
        assert_eq!(pairs, vec![(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)]);
        for (e, (i, j)) in pairs.into_iter().enumerate() {
            assert_eq!(edge_index(i, j), e);
        }
    }

    #[test]
    fn empty_network_encodes_to_zero_code() {
        let code = encode(&Network::empty(3, ops2())).unwrap();
        assert_eq!(code.count_ones(), 0);
        assert_eq!(code.bits().len(), 6);
    }

    #[test]
    fn single_op_network_sets_one_bit() {
        let net = Network::empty(3, ops2()).with_op(0, 2, 1);
        let code = encode(&net).unwrap();
        assert_eq!(code.count_ones(), 1);
        assert!(code.get(0, 2, 1).unwrap());
    }

    #[test]
    fn out_of_range_assignment_rejected() {
        let net = Network::empty(3, ops2()).with_op(0, 3, 0);
        assert!(matches!(encode(&net), Err(Error::IndexOutOfRange { what: "node", .. })));
        let net = Network::empty(3, ops2()).with_op(0, 1, 2);
        assert!(matches!(encode(&net), Err(Error::IndexOutOfRange { what: "op", .. })));
        let net = Network::empty(3, ops2()).with_op(2, 1, 0);
        assert!(encode(&net).is_err());
    }

    #[test]
    fn decode_dimension_mismatch() {
        let code = ArchitectureCode::zeros(3, 2).unwrap();
        assert!(matches!(
            decode(&code, &Primitive::ALL),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn exhaustive_bijection_n3_k2() {
        for m in 0u32..64 {
            let masks: Vec<CodeMask> = (0..3).map(|e| CodeMask((m >> (2 * e)) & 0b11)).collect();
            let code = ArchitectureCode::from_edge_masks(3, 2, &masks).unwrap();
            let net = decode(&code, &ops2()).unwrap();
            assert_eq!(encode(&net).unwrap(), code);
        }
    }

    #[test]
    fn mixing_examples() {
        let h = [0.8, 0.2];
        assert_eq!(mix_probabilities(&h, &[0.4, 0.6], 1.0).unwrap(), h.to_vec());
        let mixed = mix_probabilities(&h, &[0.4, 0.6], 0.5).unwrap();
        assert!((mixed[0] - 0.6).abs() < 1e-15 && (mixed[1] - 0.4).abs() < 1e-15);
        assert!(mix_probabilities(&[0.8, 0.3], &[0.4, 0.6], 0.5).is_err());
        assert!(mix_probabilities(&h, &[0.4, 0.6], 1.5).is_err());
        assert_eq!(DEFAULT_LAMBDA, 0.5);
    }

    #[test]
    fn efficiency_credits_favor_cheap_ops() {
        let l = efficiency_credits(&Primitive::ALL);
        assert!(on_simplex(&l));
        assert!(l[0] > l[1] && l[1] > l[2]);
        assert_eq!(l[2], l[3]);
    }

    #[test]
    fn cell_probabilities_on_simplex() {
        let mut cell = Cell::new(4, Primitive::ALL.to_vec(), 0.5, OutputRule::Sum).unwrap();
        cell.edges[2].logits = vec![3.0, -1.0, 0.5, 2.0, -4.0];
        for p in cell.probabilities() {
            assert!(on_simplex(&p));
        }
    }

    #[test]
    fn primitive_names_round_trip() {
        for p in Primitive::ALL {
            assert_eq!(p.name().parse::<Primitive>().unwrap(), p);
        }
        assert!("conv3x3".parse::<Primitive>().is_err());
    }
}

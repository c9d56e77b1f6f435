use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{edge_count, edge_pairs, ArchitectureCode, OutputRule, Primitive};

/// Bits of one edge in the exported document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeBits {
    pub from: usize,
    pub to: usize,
    pub bits: Vec<u8>,
}

/// Serializable form of an [`ArchitectureCode`] together with its op set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureDocument {
    pub nodes: usize,
    pub num_ops: usize,
    pub ops: Vec<Primitive>,
    pub edges: Vec<EdgeBits>,
}

impl ArchitectureDocument {
    pub fn new(code: &ArchitectureCode, ops: &[Primitive]) -> Result<Self> {
        if code.ops() != ops.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} ops", ops.len()),
                found: format!("code with {} ops", code.ops()),
            });
        }
        let edges = edge_pairs(code.nodes())
            .into_iter()
            .enumerate()
            .map(|(e, (from, to))| EdgeBits {
                from,
                to,
                bits: code.edge_bits(e).iter().map(|&b| u8::from(b)).collect(),
            })
            .collect();
        Ok(Self {
            nodes: code.nodes(),
            num_ops: ops.len(),
            ops: ops.to_vec(),
            edges,
        })
    }

    pub fn to_code(&self) -> Result<ArchitectureCode> {
        if self.ops.len() != self.num_ops {
            return Err(Error::DimensionMismatch {
                expected: format!("{} op names", self.num_ops),
                found: self.ops.len().to_string(),
            });
        }
        if self.edges.len() != edge_count(self.nodes) {
            return Err(Error::DimensionMismatch {
                expected: format!("{} edges", edge_count(self.nodes)),
                found: self.edges.len().to_string(),
            });
        }
        let mut code = ArchitectureCode::zeros(self.nodes, self.num_ops)?;
        for edge in &self.edges {
            if edge.bits.len() != self.num_ops {
                return Err(Error::DimensionMismatch {
                    expected: format!("{} bits on edge ({}, {})", self.num_ops, edge.from, edge.to),
                    found: edge.bits.len().to_string(),
                });
            }
            for (k, &b) in edge.bits.iter().enumerate() {
                match b {
                    0 => {}
                    1 => code.set(edge.from, edge.to, k, true)?,
                    other => return Err(Error::Parse(format!("bit value {other} is not 0 or 1"))),
                }
            }
        }
        Ok(code)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Graphviz description: one labelled arc per active op, plus the
    /// aggregation into the output node.
    pub fn to_dot(&self, output: OutputRule) -> String {
        let mut out = String::from("digraph cell {\n  rankdir=LR;\n");
        out.push_str("  n0 [label=\"input\", shape=box, style=filled, fillcolor=palegreen];\n");
        for j in 1..self.nodes {
            let _ = writeln!(out, "  n{j} [label=\"{j}\", shape=circle];");
        }
        let rule = match output {
            OutputRule::Sum => "sum",
            OutputRule::Concat => "concat",
        };
        let _ = writeln!(
            out,
            "  out [label=\"output ({rule})\", shape=box, style=filled, fillcolor=lightyellow];"
        );
        for edge in &self.edges {
            for (k, &b) in edge.bits.iter().enumerate() {
                if b == 1 && self.ops[k] != Primitive::Zero {
                    let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"];", edge.from, edge.to, self.ops[k]);
                }
            }
        }
        for j in 1..self.nodes {
            let _ = writeln!(out, "  n{j} -> out [style=dashed];");
        }
        out.push_str("}\n");
        out
    }
}

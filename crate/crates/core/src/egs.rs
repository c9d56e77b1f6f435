//! Ensemble Gumbel-Softmax: binary edge codes sampled as the element-wise
//! maximum of `M` independent Gumbel-Softmax one-hots.
//!
//! Besides the sampler this module carries the exact oracles used to audit
//! it: the marginal inclusion probability `1 - (1 - p_k)^M`, the full code
//! law by inclusion-exclusion, and exhaustive enumeration of reachable codes.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::gumbel::{
    gumbel_noise, gumbel_softmax_from_noise, gumbel_softmax_var, validate_simplex, GumbelSoftmaxSample,
    RngState,
};
use crate::tensor::{Tape, Tensor, Var};

/// Largest op count accepted by [`reachable_codes`].
pub const MAX_ENUMERATED_OPS: usize = 16;

/// Edge code packed into a bit mask, bit `k` set when op `k` is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CodeMask(pub u32);

impl CodeMask {
    pub fn from_bits(bits: &[bool]) -> Self {
        assert!(bits.len() <= 32);
        CodeMask(
            bits.iter()
                .enumerate()
                .fold(0, |acc, (k, &b)| if b { acc | (1 << k) } else { acc }),
        )
    }

    pub fn one_hot(k: usize) -> Self {
        CodeMask(1 << k)
    }

    pub fn contains(self, k: usize) -> bool {
        self.0 & (1 << k) != 0
    }

    pub fn ones(self) -> u32 {
        self.0.count_ones()
    }

    pub fn to_bits(self, k: usize) -> Vec<bool> {
        (0..k).map(|i| self.contains(i)).collect()
    }

    pub fn union(self, other: CodeMask) -> Self {
        CodeMask(self.0 | other.0)
    }

    /// Renders the first `k` bits as a `0`/`1` string, op 0 first.
    pub fn render(self, k: usize) -> String {
        (0..k).map(|i| if self.contains(i) { '1' } else { '0' }).collect()
    }
}

impl fmt::Display for CodeMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#b}", self.0)
    }
}

/// One ensemble draw: the binary code, its relaxation and the `M` constituents.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryCodeSample {
    pub hard: Vec<bool>,
    pub soft: Vec<f64>,
    pub components: Vec<GumbelSoftmaxSample>,
    pub sampling_count: usize,
}

impl BinaryCodeSample {
    pub fn mask(&self) -> CodeMask {
        CodeMask::from_bits(&self.hard)
    }
}

/// Gumbel noise for one edge, `M` rows of `K` values.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeNoise {
    rows: Vec<Vec<f64>>,
}

impl EdgeNoise {
    pub fn draw(rng: &mut RngState, sampling_count: usize, ops: usize) -> Result<Self> {
        if sampling_count < 1 {
            return Err(Error::InvalidSamplingCount(sampling_count));
        }
        Ok(Self {
            rows: (0..sampling_count).map(|_| gumbel_noise(rng, ops)).collect(),
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidSamplingCount(0));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn sampling_count(&self) -> usize {
        self.rows.len()
    }
}

pub fn egs_sample(p: &[f64], sampling_count: usize, tau: f64, rng: &mut RngState) -> Result<BinaryCodeSample> {
    if sampling_count < 1 {
        return Err(Error::InvalidSamplingCount(sampling_count));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidTemperature(tau));
    }
    validate_simplex(p)?;
    let noise = EdgeNoise::draw(rng, sampling_count, p.len())?;
    Ok(egs_from_noise(p, tau, &noise))
}

/// Ensemble sample under fixed noise; `p` and `tau` are assumed validated.
pub fn egs_from_noise(p: &[f64], tau: f64, noise: &EdgeNoise) -> BinaryCodeSample {
    let components: Vec<GumbelSoftmaxSample> = noise
        .rows
        .iter()
        .map(|g| gumbel_softmax_from_noise(p, tau, g))
        .collect();
    let k = p.len();
    let mut hard = vec![false; k];
    let mut soft = vec![f64::NEG_INFINITY; k];
    for c in &components {
        for i in 0..k {
            hard[i] |= c.hard[i] == 1.0;
            if c.soft[i] > soft[i] {
                soft[i] = c.soft[i];
            }
        }
    }
    BinaryCodeSample {
        hard,
        soft,
        components,
        sampling_count: noise.rows.len(),
    }
}

/// Ensemble sample recorded on a tape.
#[derive(Debug, Clone)]
pub struct RelaxedEdgeCode {
    pub hard: Vec<bool>,
    /// Element-wise maximum of the component relaxations.
    pub soft: Var,
    /// Straight-through weights: forward `hard`, backward through `soft`.
    pub weights: Var,
}

impl RelaxedEdgeCode {
    pub fn mask(&self) -> CodeMask {
        CodeMask::from_bits(&self.hard)
    }
}

/// Records an ensemble sample on `tape` from log-probabilities `log_p`.
///
/// With `relaxed` set, the returned weights are the soft vector itself rather
/// than the straight-through binary code.
pub fn egs_sample_var(
    tape: &mut Tape,
    log_p: Var,
    tau: f64,
    noise: &EdgeNoise,
    relaxed: bool,
) -> Result<RelaxedEdgeCode> {
    let k = tape.value(log_p).numel();
    let mut hard = vec![false; k];
    let mut soft: Option<Var> = None;
    for row in &noise.rows {
        if row.len() != k {
            return Err(Error::DimensionMismatch {
                expected: format!("{k} noise values"),
                found: row.len().to_string(),
            });
        }
        let (s, idx) = gumbel_softmax_var(tape, log_p, tau, row)?;
        hard[idx] = true;
        soft = Some(match soft {
            None => s,
            Some(acc) => tape.max(acc, s)?,
        });
    }
    let soft = soft.ok_or(Error::InvalidSamplingCount(0))?;
    let weights = if relaxed {
        soft
    } else {
        let h = tape.constant(Tensor::vector(hard.iter().map(|&b| f64::from(u8::from(b))).collect()));
        tape.straight_through(soft, h)?
    };
    Ok(RelaxedEdgeCode { hard, soft, weights })
}

/// Exact `P(code_k = 1) = 1 - (1 - p_k)^M` under independent Gumbel-Max draws.
///
/// # Panics
/// If `k` is out of range for `p`.
pub fn marginal_inclusion_oracle(p: &[f64], sampling_count: usize, k: usize) -> f64 {
    1.0 - (1.0 - p[k]).powi(sampling_count as i32)
}

/// Exact probability that the ensemble code equals `code`, by inclusion-exclusion
/// over the subsets of its set bits.
pub fn code_probability_oracle(p: &[f64], sampling_count: usize, code: CodeMask) -> f64 {
    if code.0 == 0 {
        return 0.0;
    }
    let bits: Vec<usize> = (0..p.len()).filter(|&k| code.contains(k)).collect();
    if bits.len() != code.ones() as usize {
        return 0.0;
    }
    let size = bits.len();
    let mut total = 0.0;
    for sub in 1u32..(1 << size) {
        let mass: f64 = (0..size).filter(|i| sub & (1 << i) != 0).map(|i| p[bits[i]]).sum();
        let sign = if (size - sub.count_ones() as usize).is_multiple_of(2) { 1.0 } else { -1.0 };
        total += sign * mass.powi(sampling_count as i32);
    }
    total.max(0.0)
}

/// Every element-wise maximum of `M` one-hot vectors of length `K`.
///
/// Compositions are enumerated level by level: level `m` holds every max of
/// exactly `m` one-hots, built from level `m - 1` by one more max with each
/// one-hot.
pub fn reachable_codes(ops: usize, sampling_count: usize) -> Result<BTreeSet<CodeMask>> {
    if !(1..=MAX_ENUMERATED_OPS).contains(&ops) {
        return Err(Error::EnumerationBound {
            k: ops,
            max: MAX_ENUMERATED_OPS,
        });
    }
    if sampling_count < 1 {
        return Err(Error::InvalidSamplingCount(sampling_count));
    }
    let one_hots: Vec<CodeMask> = (0..ops).map(CodeMask::one_hot).collect();
    let mut level: BTreeSet<CodeMask> = one_hots.iter().copied().collect();
    let mut seen = level.clone();
    for _ in 1..sampling_count {
        let next: BTreeSet<CodeMask> = level
            .iter()
            .flat_map(|c| one_hots.iter().map(move |h| c.union(*h)))
            .collect();
        if next == level {
            break;
        }
        seen.extend(next.iter().copied());
        level = next;
    }
    Ok(seen)
}

/// The closed-form count `C(K, M) * (2^M - 1)` stated for ensemble reachability.
pub fn proposition3_formula(ops: usize, sampling_count: usize) -> u128 {
    binomial(ops as u64, sampling_count as u64) * ((1u128 << sampling_count.min(127)) - 1)
}

pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Splits a binary edge code into one one-hot vector per set bit.
pub fn recode_superposition(edge_code: &[bool]) -> Result<Vec<Vec<bool>>> {
    let parts: Vec<Vec<bool>> = edge_code
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(k, _)| {
            let mut v = vec![false; edge_code.len()];
            v[k] = true;
            v
        })
        .collect();
    if parts.is_empty() {
        return Err(Error::EmptyCode);
    }
    Ok(parts)
}

//! Audit of the sampler and code-space claims: code uniqueness, monotone
//! inclusion marginals, and reachable-code counts against the closed form.
//!
//! The count comparison is informational; only the code uniqueness,
//! marginal agreement, oracle monotonicity and the shape of the enumerated
//! support decide whether the audit passes.

use std::fmt;
use std::ops::RangeInclusive;

use crate::egs::{
    egs_sample, marginal_inclusion_oracle, proposition3_formula, reachable_codes, CodeMask, MAX_ENUMERATED_OPS,
};
use crate::error::{Error, Result};
use crate::gumbel::RngState;
use crate::space::{decode, encode, ArchitectureCode, Primitive};

#[derive(Debug, Clone, PartialEq)]
pub struct AuditConfig {
    pub ops: RangeInclusive<usize>,
    pub sampling_counts: RangeInclusive<usize>,
    /// Monte-Carlo draws per marginal check.
    pub draws: usize,
    /// Largest accepted |z| of an empirical marginal against the oracle.
    pub z_threshold: f64,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            ops: 1..=6,
            sampling_counts: 1..=4,
            draws: 20_000,
            z_threshold: 4.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BijectionCheck {
    pub nodes: usize,
    pub ops: usize,
    pub exhaustive: bool,
    pub checked: usize,
    pub matched: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalCheck {
    pub ops: usize,
    pub sampling_count: usize,
    pub p: Vec<f64>,
    pub empirical: Vec<f64>,
    pub oracle: Vec<f64>,
    pub max_z: f64,
    pub within_bounds: bool,
    pub oracle_monotone: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountStatus {
    Agree,
    DisagreeReported,
}

impl fmt::Display for CountStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CountStatus::Agree => "AGREE",
            CountStatus::DisagreeReported => "DISAGREE-REPORTED",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountCheck {
    pub ops: usize,
    pub sampling_count: usize,
    pub enumerated: usize,
    pub formula: u128,
    pub status: CountStatus,
    /// Enumerated support is exactly the codes with 1..=min(M, K) ones.
    pub support_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub bijection: Vec<BijectionCheck>,
    pub marginals: Vec<MarginalCheck>,
    pub counts: Vec<CountCheck>,
    pub z_threshold: f64,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.bijection.iter().all(|b| b.matched == b.checked)
            && self.marginals.iter().all(|m| m.within_bounds && m.oracle_monotone)
            && self.counts.iter().all(|c| c.support_ok)
    }

    pub fn count(&self, ops: usize, sampling_count: usize) -> Option<&CountCheck> {
        self.counts
            .iter()
            .find(|c| c.ops == ops && c.sampling_count == sampling_count)
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# code uniqueness (encode/decode bijection)")?;
        for b in &self.bijection {
            writeln!(
                f,
                "bijection n={} K={} {}: {}/{} round-trip {}",
                b.nodes,
                b.ops,
                if b.exhaustive { "exhaustive" } else { "random" },
                b.matched,
                b.checked,
                verdict(b.matched == b.checked)
            )?;
        }
        writeln!(f, "# inclusion marginals, Monte Carlo vs 1-(1-p_k)^M (|z| <= {})", self.z_threshold)?;
        for m in &self.marginals {
            writeln!(
                f,
                "marginal K={} M={} p={} empirical={} oracle={} max|z|={:.3} {}; oracle monotone {}",
                m.ops,
                m.sampling_count,
                fmt_vec(&m.p),
                fmt_vec(&m.empirical),
                fmt_vec(&m.oracle),
                m.max_z,
                verdict(m.within_bounds),
                verdict(m.oracle_monotone)
            )?;
        }
        writeln!(f, "# reachable codes, enumeration vs C(K,M)*(2^M-1)")?;
        for c in &self.counts {
            writeln!(
                f,
                "count K={} M={} enumeration={} formula={} {}; support {}",
                c.ops,
                c.sampling_count,
                c.enumerated,
                c.formula,
                c.status,
                verdict(c.support_ok)
            )?;
        }
        let disagreements = self
            .counts
            .iter()
            .filter(|c| c.status == CountStatus::DisagreeReported)
            .count();
        writeln!(
            f,
            "summary: {} ({} count disagreement(s) reported)",
            if self.passed() {
                "all invariants hold"
            } else {
                "INVARIANT FAILURE"
            },
            disagreements
        )
    }
}

/// Round-trips every code of the given size.
pub fn exhaustive_bijection(nodes: usize, ops: &[Primitive]) -> Result<BijectionCheck> {
    let edges = crate::space::edge_count(nodes);
    let bits = edges * ops.len();
    if bits > 20 {
        return Err(Error::EnumerationBound {
            k: ops.len(),
            max: 20 / edges.max(1),
        });
    }
    let mut matched = 0;
    let total = 1usize << bits;
    let edge_mask = (1u32 << ops.len()) - 1;
    for m in 0..total as u32 {
        let masks: Vec<CodeMask> = (0..edges)
            .map(|e| CodeMask((m >> (e * ops.len())) & edge_mask))
            .collect();
        let code = ArchitectureCode::from_edge_masks(nodes, ops.len(), &masks)?;
        if encode(&decode(&code, ops)?)? == code {
            matched += 1;
        }
    }
    Ok(BijectionCheck {
        nodes,
        ops: ops.len(),
        exhaustive: true,
        checked: total,
        matched,
    })
}

/// Round-trips `samples` random codes; every bit is a fair coin.
pub fn random_bijection(nodes: usize, ops: &[Primitive], samples: usize, rng: &mut RngState) -> Result<BijectionCheck> {
    let mut matched = 0;
    for _ in 0..samples {
        let code = crate::search::random_code(nodes, ops.len(), false, rng)?;
        if encode(&decode(&code, ops)?)? == code {
            matched += 1;
        }
    }
    Ok(BijectionCheck {
        nodes,
        ops: ops.len(),
        exhaustive: false,
        checked: samples,
        matched,
    })
}

/// Random probability vector of length `k` from normalized exponential draws.
pub fn random_simplex(k: usize, rng: &mut RngState) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.uniform()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Empirical inclusion frequencies over `draws` ensemble samples.
pub fn empirical_marginals(p: &[f64], sampling_count: usize, draws: usize, rng: &mut RngState) -> Result<Vec<f64>> {
    let mut hits = vec![0u64; p.len()];
    for _ in 0..draws {
        let s = egs_sample(p, sampling_count, 1.0, rng)?;
        for (h, &b) in hits.iter_mut().zip(&s.hard) {
            *h += u64::from(b);
        }
    }
    Ok(hits.into_iter().map(|h| h as f64 / draws as f64).collect())
}

/// `|empirical - q| / sqrt(q (1 - q) / n)`; zero-variance cases must match exactly.
pub fn binomial_z(empirical: f64, q: f64, n: usize) -> f64 {
    let var = q * (1.0 - q) / n as f64;
    if var <= 0.0 {
        if (empirical - q).abs() < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (empirical - q).abs() / var.sqrt()
    }
}

/// Oracle marginals are ordered exactly as the probabilities are.
pub fn oracle_is_monotone(p: &[f64], sampling_count: usize) -> bool {
    let q: Vec<f64> = (0..p.len())
        .map(|k| marginal_inclusion_oracle(p, sampling_count, k))
        .collect();
    (0..p.len()).all(|a| {
        (0..p.len()).all(|b| {
            let ordered = if p[a] < p[b] { q[a] < q[b] } else { true };
            let equal = if p[a] == p[b] { q[a] == q[b] } else { true };
            ordered && equal
        })
    })
}

pub fn marginal_check(
    p: &[f64],
    sampling_count: usize,
    draws: usize,
    z_threshold: f64,
    rng: &mut RngState,
) -> Result<MarginalCheck> {
    let empirical = empirical_marginals(p, sampling_count, draws, rng)?;
    let oracle: Vec<f64> = (0..p.len())
        .map(|k| marginal_inclusion_oracle(p, sampling_count, k))
        .collect();
    let max_z = empirical
        .iter()
        .zip(&oracle)
        .map(|(&e, &q)| binomial_z(e, q, draws))
        .fold(0.0, f64::max);
    Ok(MarginalCheck {
        ops: p.len(),
        sampling_count,
        p: p.to_vec(),
        within_bounds: max_z <= z_threshold,
        oracle_monotone: oracle_is_monotone(p, sampling_count),
        empirical,
        oracle,
        max_z,
    })
}

pub fn count_check(ops: usize, sampling_count: usize) -> Result<CountCheck> {
    let codes = reachable_codes(ops, sampling_count)?;
    let cap = sampling_count.min(ops) as u32;
    let expected_support = (1u32..(1 << ops)).filter(|m| m.count_ones() <= cap).count();
    let support_ok = codes.len() == expected_support && codes.iter().all(|c| (1..=cap).contains(&c.ones()));
    let formula = proposition3_formula(ops, sampling_count);
    Ok(CountCheck {
        ops,
        sampling_count,
        enumerated: codes.len(),
        formula,
        status: if formula == codes.len() as u128 {
            CountStatus::Agree
        } else {
            CountStatus::DisagreeReported
        },
        support_ok,
    })
}

pub fn run_audit(cfg: &AuditConfig) -> Result<AuditReport> {
    if *cfg.ops.end() > MAX_ENUMERATED_OPS || *cfg.ops.start() < 1 {
        return Err(Error::EnumerationBound {
            k: *cfg.ops.end(),
            max: MAX_ENUMERATED_OPS,
        });
    }
    if *cfg.sampling_counts.start() < 1 {
        return Err(Error::InvalidSamplingCount(*cfg.sampling_counts.start()));
    }
    if cfg.draws < 1 {
        return Err(Error::config("draws", "must be at least 1"));
    }
    let mut rng = RngState::new(cfg.seed);
    let two = [Primitive::Zero, Primitive::Identity];
    let bijection = vec![
        exhaustive_bijection(3, &two)?,
        random_bijection(7, &Primitive::ALL, 1000, &mut rng)?,
    ];
    let mut marginals = Vec::new();
    let mut counts = Vec::new();
    for k in cfg.ops.clone() {
        for m in cfg.sampling_counts.clone() {
            counts.push(count_check(k, m)?);
            if k >= 2 {
                let p = random_simplex(k, &mut rng);
                marginals.push(marginal_check(&p, m, cfg.draws, cfg.z_threshold, &mut rng)?);
            }
        }
    }
    Ok(AuditReport {
        bijection,
        marginals,
        counts,
        z_threshold: cfg.z_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_statuses() {
        assert_eq!(count_check(2, 2).unwrap().status, CountStatus::Agree);
        let c = count_check(3, 2).unwrap();
        assert_eq!((c.enumerated, c.formula, c.status), (6, 9, CountStatus::DisagreeReported));
        assert!(c.support_ok);
        for k in 1..=8 {
            assert_eq!(count_check(k, 1).unwrap().status, CountStatus::Agree);
        }
    }

    #[test]
    fn monotone_oracle_detects_order() {
        assert!(oracle_is_monotone(&[0.1, 0.2, 0.7], 3));
        assert!(oracle_is_monotone(&[0.25, 0.25, 0.5], 2));
    }

    #[test]
    fn z_score_edge_cases() {
        assert_eq!(binomial_z(0.0, 0.0, 100), 0.0);
        assert_eq!(binomial_z(0.01, 0.0, 100), f64::INFINITY);
        assert!((binomial_z(0.55, 0.5, 100) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_audit_passes_and_reports_disagreement() {
        let report = run_audit(&AuditConfig {
            ops: 2..=3,
            sampling_counts: 1..=2,
            draws: 4000,
            ..AuditConfig::default()
        })
        .unwrap();
        assert!(report.passed(), "{report}");
        assert_eq!(report.bijection[0].checked, 64);
        let text = report.to_string();
        assert!(text.contains("count K=3 M=2 enumeration=6 formula=9 DISAGREE-REPORTED"));
        assert!(text.contains("count K=2 M=2 enumeration=3 formula=3 AGREE"));
    }

    #[test]
    fn audit_rejects_out_of_bound_ranges() {
        let cfg = AuditConfig {
            ops: 2..=17,
            ..AuditConfig::default()
        };
        assert!(matches!(run_audit(&cfg), Err(Error::EnumerationBound { .. })));
    }
}

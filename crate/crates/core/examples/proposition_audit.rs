//! Bijection, marginal and code-count audit over a small grid.
use egsnas::audit::{run_audit, AuditConfig};

fn main() -> egsnas::Result<()> {
    let report = run_audit(&AuditConfig {
        ops: 1..=5,
        sampling_counts: 1..=3,
        draws: 10_000,
        ..AuditConfig::default()
    })?;
    print!("{report}");
    Ok(())
}

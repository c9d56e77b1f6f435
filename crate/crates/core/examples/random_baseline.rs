//! Derived codes against the random-search baseline over a few seeds.
//!
//! `cargo run --release --example random_baseline [seeds]`
use egsnas::commands::{compare_with_baseline, comparison_table};
use egsnas::config::{DatasetKind, RunConfig};

fn main() -> egsnas::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let cfg = RunConfig {
        dataset: DatasetKind::Spirals,
        ..RunConfig::default()
    };
    let rows = compare_with_baseline(&cfg, &(0..seeds).collect::<Vec<_>>())?;
    print!("{}", comparison_table(&rows));
    Ok(())
}

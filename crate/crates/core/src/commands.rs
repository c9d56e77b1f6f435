//! Command layer behind the `egsnas` binary. Every command takes a validated
//! [`RunConfig`], writes its artifacts under the configured output directory
//! and returns the in-memory result.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::{run_audit, AuditConfig, AuditReport};
use crate::config::RunConfig;
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::search::{random_search_baseline, retrain, run_search, write_metrics_csv, SearchReport};
use crate::space::{ArchitectureCode, ArchitectureDocument, Primitive};

pub const METRICS_FILE: &str = "metrics.csv";
pub const ARCHITECTURE_FILE: &str = "architecture.json";
pub const GRAPH_FILE: &str = "architecture.dot";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const EVALUATE_FILE: &str = "evaluate.json";
pub const BASELINE_FILE: &str = "baseline.json";
pub const BASELINE_ARCHITECTURE_FILE: &str = "baseline_architecture.json";
pub const BASELINE_CANDIDATES_FILE: &str = "baseline_candidates.csv";

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn prepare(cfg: &RunConfig) -> Result<Dataset> {
    cfg.validate()?;
    cfg.build_dataset()
}

/// Accuracy of one code after a full retrain. Shared by `evaluate` and `baseline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub source: String,
    pub seed: u64,
    pub nodes: usize,
    pub ops: Vec<Primitive>,
    pub code: String,
    pub bit_count: usize,
    pub train_accuracy: f64,
    pub valid_accuracy: f64,
    pub test_accuracy: f64,
}

impl AccuracyReport {
    fn new(source: &str, cfg: &RunConfig, code: &ArchitectureCode, dataset: &Dataset) -> Result<Self> {
        let outcome = retrain(code, &cfg.ops, dataset, &cfg.retrain_config())?;
        Ok(Self {
            source: source.to_string(),
            seed: cfg.seed,
            nodes: code.nodes(),
            ops: cfg.ops.clone(),
            code: code.render(),
            bit_count: code.count_ones(),
            train_accuracy: outcome.train_accuracy,
            valid_accuracy: outcome.valid_accuracy,
            test_accuracy: outcome.test_accuracy,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[derive(Debug, Clone)]
pub struct SearchSummary {
    pub report: SearchReport,
    pub document: ArchitectureDocument,
    pub probabilities: Vec<Vec<f64>>,
    pub output_dir: PathBuf,
}

impl SearchSummary {
    pub fn code(&self) -> &ArchitectureCode {
        &self.report.derived
    }
}

fn summary_text(cfg: &RunConfig, report: &SearchReport, probs: &[Vec<f64>]) -> String {
    let mut s = String::new();
    let ops: Vec<&str> = cfg.ops.iter().map(|p| p.name()).collect();
    let _ = writeln!(s, "search summary");
    let _ = writeln!(s, "dataset: {:?} samples={} seed={}", cfg.dataset, cfg.samples, cfg.data_seed);
    let _ = writeln!(
        s,
        "cell: nodes={} ops=[{}] sampling_count={} lambda={}",
        cfg.nodes,
        ops.join(", "),
        cfg.sampling_count,
        cfg.lambda
    );
    let _ = writeln!(s, "seed: {}  derive: {}", cfg.seed, cfg.derive);
    if let Some(last) = report.epochs.last() {
        let _ = writeln!(
            s,
            "final epoch: step={} train_loss={:.6} valid_loss={:.6} tau={:.4}",
            last.step, last.train_loss, last.valid_loss, last.tau
        );
    }
    let _ = writeln!(s, "sampling events per edge: {}", report.sampling_events);
    let _ = writeln!(s, "derived code ({} bits): {}", report.derived.count_ones(), report.derived.render());
    let _ = writeln!(s, "edges:");
    for (e, (i, j)) in crate::space::edge_pairs(cfg.nodes).into_iter().enumerate() {
        let active: Vec<&str> = (0..cfg.ops.len())
            .filter(|&k| report.derived.edge_bits(e)[k])
            .map(|k| ops[k])
            .collect();
        let p: Vec<String> = probs[e].iter().map(|v| format!("{v:.3}")).collect();
        let mut top: Vec<_> = report.histogram[e].iter().collect();
        top.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        let top: Vec<String> = top
            .iter()
            .take(3)
            .map(|(c, n)| format!("{}x{}", c.render(cfg.ops.len()), n))
            .collect();
        let _ = writeln!(
            s,
            "  ({i},{j}) ops=[{}] p=[{}] most sampled: {}",
            active.join(", "),
            p.join(", "),
            top.join(" ")
        );
    }
    s
}

/// Runs a search and exports metrics, the derived code, its graph and a summary.
pub fn cmd_search(cfg: &RunConfig) -> Result<SearchSummary> {
    let dataset = prepare(cfg)?;
    let run = run_search(&cfg.search_config()?, &dataset)?;
    let report = run.report;
    let document = ArchitectureDocument::new(&report.derived, &cfg.ops)?;
    let probabilities = run.state.cell.probabilities();

    let mut metrics = Vec::new();
    write_metrics_csv(&report.epochs, &mut metrics).map_err(|e| Error::io(METRICS_FILE, e))?;
    let dir = &cfg.output_dir;
    write(dir, METRICS_FILE, std::str::from_utf8(&metrics).expect("ascii metrics"))?;
    write(dir, ARCHITECTURE_FILE, &document.to_json()?)?;
    write(dir, GRAPH_FILE, &document.to_dot(cfg.output))?;
    write(dir, SUMMARY_FILE, &summary_text(cfg, &report, &probabilities))?;
    Ok(SearchSummary {
        report,
        document,
        probabilities,
        output_dir: dir.clone(),
    })
}

pub fn load_code(path: &Path) -> Result<(ArchitectureCode, Vec<Primitive>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc = ArchitectureDocument::from_json(&text)?;
    Ok((doc.to_code()?, doc.ops))
}

/// Retrains the exported code at `code_path` and reports its accuracies.
pub fn cmd_evaluate(code_path: &Path, cfg: &RunConfig) -> Result<AccuracyReport> {
    cfg.validate()?;
    let (code, ops) = load_code(code_path)?;
    if code.nodes() != cfg.nodes || ops != cfg.ops {
        return Err(Error::DimensionMismatch {
            expected: format!("nodes={} ops={:?}", cfg.nodes, cfg.ops),
            found: format!("nodes={} ops={:?}", code.nodes(), ops),
        });
    }
    let dataset = cfg.build_dataset()?;
    let report = AccuracyReport::new("evaluate", cfg, &code, &dataset)?;
    write(&cfg.output_dir, EVALUATE_FILE, &report.to_json()?)?;
    Ok(report)
}

/// Random-search baseline; the best candidate gets the same full retrain as
/// an evaluated code.
pub fn cmd_baseline(cfg: &RunConfig, budget: usize) -> Result<AccuracyReport> {
    let dataset = prepare(cfg)?;
    let outcome = random_search_baseline(
        cfg.nodes,
        &cfg.ops,
        budget,
        &dataset,
        &cfg.retrain_config(),
        cfg.baseline_epochs,
        cfg.resample_empty_edges,
    )?;
    let best = outcome.best_code().clone();
    let report = AccuracyReport::new("baseline", cfg, &best, &dataset)?;
    let mut candidates = String::from("candidate,code,bit_count,brief_valid_accuracy\n");
    for (i, c) in outcome.candidates.iter().enumerate() {
        let _ = writeln!(candidates, "{i},{},{},{}", c.code.render(), c.code.count_ones(), c.valid_accuracy);
    }
    let dir = &cfg.output_dir;
    write(dir, BASELINE_FILE, &report.to_json()?)?;
    write(
        dir,
        BASELINE_ARCHITECTURE_FILE,
        &ArchitectureDocument::new(&best, &cfg.ops)?.to_json()?,
    )?;
    write(dir, BASELINE_CANDIDATES_FILE, &candidates)?;
    Ok(report)
}

pub fn cmd_verify_propositions(audit: &AuditConfig) -> Result<AuditReport> {
    run_audit(audit)
}

pub fn cmd_dump_dataset(cfg: &RunConfig, path: &Path) -> Result<()> {
    let dataset = prepare(cfg)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    dataset.write_csv(std::io::BufWriter::new(file))
}

/// Derived code against the random baseline for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub seed: u64,
    pub derived: AccuracyReport,
    pub baseline: AccuracyReport,
    pub search_seconds: f64,
}

/// Search + retrain and baseline + retrain for each seed, run in parallel.
/// Nothing is written to disk.
pub fn compare_with_baseline(cfg: &RunConfig, seeds: &[u64]) -> Result<Vec<ComparisonRow>> {
    let dataset = prepare(cfg)?;
    seeds
        .par_iter()
        .map(|&seed| {
            let cfg = RunConfig {
                seed,
                ..cfg.clone()
            };
            let run = run_search(&cfg.search_config()?, &dataset)?;
            let derived = AccuracyReport::new("derived", &cfg, &run.report.derived, &dataset)?;
            let baseline_outcome = random_search_baseline(
                cfg.nodes,
                &cfg.ops,
                cfg.budget,
                &dataset,
                &cfg.retrain_config(),
                cfg.baseline_epochs,
                cfg.resample_empty_edges,
            )?;
            let baseline = AccuracyReport::new("baseline", &cfg, baseline_outcome.best_code(), &dataset)?;
            Ok(ComparisonRow {
                seed,
                derived,
                baseline,
                search_seconds: run.report.wall_seconds,
            })
        })
        .collect()
}

/// Plain-text table of a multi-seed comparison.
pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("seed  derived_test  derived_bits  baseline_test  baseline_bits\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<5} {:<13.4} {:<13} {:<14.4} {}",
            r.seed, r.derived.test_accuracy, r.derived.bit_count, r.baseline.test_accuracy, r.baseline.bit_count
        );
    }
    let n = rows.len().max(1) as f64;
    let d: f64 = rows.iter().map(|r| r.derived.test_accuracy).sum::<f64>() / n;
    let b: f64 = rows.iter().map(|r| r.baseline.test_accuracy).sum::<f64>() / n;
    let _ = writeln!(s, "mean  {d:<13.4} {:<13} {b:<14.4}", "");
    s
}

//! Searches a cell on spirals, then retrains the derived code.
//!
//! `cargo run --release --example search_spirals [seed]`
use egsnas::config::{DatasetKind, RunConfig};
use egsnas::search::{retrain, run_search};

fn main() -> egsnas::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = RunConfig {
        dataset: DatasetKind::Spirals,
        seed,
        ..RunConfig::default()
    };
    let ds = cfg.build_dataset()?;
    let run = run_search(&cfg.search_config()?, &ds)?;
    for e in run.report.epochs.iter().step_by(5) {
        println!("step {:5} tau {:.3} train {:.4} valid {:.4}", e.step, e.tau, e.train_loss, e.valid_loss);
    }
    let probs = run.state.cell.probabilities();
    for (e, p) in probs.iter().enumerate() {
        let p: Vec<String> = p.iter().map(|v| format!("{v:.3}")).collect();
        println!("edge {e}: p = [{}]", p.join(", "));
    }
    let code = &run.report.derived;
    println!("derived ({} bits): {}", code.count_ones(), code.render());
    let out = retrain(code, &cfg.ops, &ds, &cfg.retrain_config())?;
    println!("retrained: train {:.4} valid {:.4} test {:.4}", out.train_accuracy, out.valid_accuracy, out.test_accuracy);
    Ok(())
}

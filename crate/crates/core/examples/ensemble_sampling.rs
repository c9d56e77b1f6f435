//! Ensemble codes: empirical code law and inclusion marginals for several M.
use std::collections::BTreeMap;

use egsnas::egs::{code_probability_oracle, egs_sample, marginal_inclusion_oracle, reachable_codes};
use egsnas::gumbel::RngState;

fn main() -> egsnas::Result<()> {
    let p = [0.1, 0.3, 0.6];
    let n = 50_000;
    let mut rng = RngState::new(1);
    for m in 1..=4 {
        let mut hist = BTreeMap::new();
        let mut hits = vec![0usize; p.len()];
        for _ in 0..n {
            let s = egs_sample(&p, m, 0.5, &mut rng)?;
            for (h, &b) in hits.iter_mut().zip(&s.hard) {
                *h += usize::from(b);
            }
            *hist.entry(s.mask()).or_insert(0usize) += 1;
        }
        println!("M = {m}: {} reachable codes", reachable_codes(p.len(), m)?.len());
        for k in 0..p.len() {
            println!(
                "  op {k} included {:.4} (oracle {:.4})",
                hits[k] as f64 / n as f64,
                marginal_inclusion_oracle(&p, m, k)
            );
        }
        for (code, count) in &hist {
            println!(
                "  code {} freq {:.4} oracle {:.4}",
                code.render(p.len()),
                *count as f64 / n as f64,
                code_probability_oracle(&p, m, *code)
            );
        }
    }
    Ok(())
}

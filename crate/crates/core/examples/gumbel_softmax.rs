//! Gumbel-Softmax draws at several temperatures against the Gumbel-Max law.
use egsnas::gumbel::{gumbel_max, gumbel_softmax, RngState};

fn main() -> egsnas::Result<()> {
    let p = [0.1, 0.2, 0.3, 0.4];
    let mut rng = RngState::new(0);
    for tau in [0.01, 0.1, 1.0, 10.0, 1e6] {
        let s = gumbel_softmax(&p, tau, &mut rng)?;
        let soft: Vec<String> = s.soft.iter().map(|v| format!("{v:.4}")).collect();
        println!("tau {tau:>9}: soft [{}] -> op {}", soft.join(", "), s.index());
    }

    let n = 100_000;
    let mut argmax = [0usize; 4];
    let mut max = [0usize; 4];
    for _ in 0..n {
        argmax[gumbel_softmax(&p, 0.5, &mut rng)?.index()] += 1;
        max[gumbel_max(&p, &mut rng)?] += 1;
    }
    println!("op  p     softmax-argmax  gumbel-max");
    for k in 0..4 {
        println!("{k}   {:.2}  {:.4}          {:.4}", p[k], argmax[k] as f64 / n as f64, max[k] as f64 / n as f64);
    }
    Ok(())
}

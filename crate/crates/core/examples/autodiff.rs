//! Builds a tiny two-layer classifier on a tape and takes a few gradient steps.
use egsnas::tensor::{Tape, Tensor};

fn main() -> egsnas::Result<()> {
    let x = Tensor::new([4, 2], vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0])?;
    let y = Tensor::vector(vec![0.0, 1.0, 1.0, 0.0]);
    let mut params = vec![
        Tensor::new([2, 4], vec![0.5, -0.4, 0.3, 0.8, -0.6, 0.7, 0.2, -0.9])?,
        Tensor::vector(vec![0.1, -0.1, 0.0, 0.2]),
        Tensor::new([4, 2], vec![0.3, -0.2, -0.5, 0.4, 0.6, -0.7, -0.1, 0.9])?,
        Tensor::vector(vec![0.0, 0.0]),
    ];
    for step in 0..=300 {
        let mut tape = Tape::new();
        let vars: Vec<_> = params.iter().map(|p| tape.param(p.clone())).collect();
        let xv = tape.constant(x.clone());
        let yv = tape.constant(y.clone());
        let h = tape.matmul(xv, vars[0])?;
        let h = tape.add(h, vars[1])?;
        let h = tape.tanh(h)?;
        let z = tape.matmul(h, vars[2])?;
        let z = tape.add(z, vars[3])?;
        let loss = tape.cross_entropy_with_logits(z, yv)?;
        if step % 50 == 0 {
            println!("step {step:3}  loss {:.5}  tape nodes {}", tape.value(loss).item(), tape.len());
        }
        let grads = tape.backward(loss)?;
        for (p, v) in params.iter_mut().zip(&vars) {
            let g = grads.get(*v).expect("parameter reached");
            for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                *w -= 0.5 * d;
            }
        }
    }
    Ok(())
}

//! Generates each synthetic dataset and prints its first rows and split sizes.
use egsnas::datasets::{make_parity, make_spirals, make_two_moons, Dataset};

fn show(name: &str, d: &Dataset) {
    let counts = d.class_counts(&(0..d.len()).collect::<Vec<_>>());
    println!(
        "{name}: {} samples, dims {}, class counts {counts:?}, splits {}/{}/{}",
        d.len(),
        d.dims,
        d.train.len(),
        d.valid.len(),
        d.test.len()
    );
}

fn main() -> egsnas::Result<()> {
    let moons = make_two_moons(400, 0.1, 0)?;
    show("moons", &moons);
    show("spirals", &make_spirals(1000, 1.5, 0.1, 0)?);
    show("parity", &make_parity(6, 0)?);

    let mut out = Vec::new();
    moons.write_csv(&mut out)?;
    for line in String::from_utf8_lossy(&out).lines().take(6) {
        println!("  {line}");
    }
    Ok(())
}

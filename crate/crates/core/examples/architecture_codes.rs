//! Encodes a cell as a binary code, decodes it back and exports JSON and DOT.
use egsnas::space::{decode, encode, ArchitectureDocument, Network, OutputRule, Primitive};

fn main() -> egsnas::Result<()> {
    let ops = Primitive::ALL.to_vec();
    let net = Network::empty(4, ops.clone())
        .with_op(0, 1, 1)
        .with_op(0, 1, 0)
        .with_op(1, 2, 2)
        .with_op(0, 3, 0)
        .with_op(2, 3, 3);
    let code = encode(&net)?;
    println!("code ({} bits): {}", code.count_ones(), code.render());
    assert_eq!(decode(&code, &ops)?, net);

    let doc = ArchitectureDocument::new(&code, &ops)?;
    println!("{}", doc.to_json()?);
    println!("{}", doc.to_dot(OutputRule::Sum));
    Ok(())
}

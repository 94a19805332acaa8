//! Laminate of `M = I` towards `det = 3` in three dimensions: atoms, bad
//! mass and the p-th moment as the depth grows.

use lamforge::checks::moment_p;
use lamforge::laminate::AtomRole;
use lamforge::{build_laminate, Depth, Matrix};

fn main() -> lamforge::Result<()> {
    let m = Matrix::identity(3)?;
    let nu = build_laminate(&m, 3.0, Depth::Fixed(1))?;
    println!("depth 1: {} atoms", nu.atoms.len());
    for a in &nu.atoms {
        println!("  w = {:<6} det = {:>7.4} {:?}", a.weight.to_string(), a.matrix.determinant(), a.role);
    }

    println!("\n{:>5} {:>8} {:>12} {:>10}", "k", "atoms", "bad mass", "moment_2");
    for k in 1..=10 {
        let nu = build_laminate(&m, 3.0, Depth::Fixed(k))?;
        let bad = nu.atoms.iter().filter(|a| a.role == AtomRole::Bad).count();
        println!(
            "{k:>5} {:>8} {:>12} {:>10.5}   ({bad} bad atoms)",
            nu.atoms.len(),
            nu.bad_mass().to_string(),
            moment_p(&nu, &m, 2.0)
        );
    }
    Ok(())
}

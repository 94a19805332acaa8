//! Diagnostics of a random laminate: barycenter, moments, tightness, minors
//! and the Jensen checks for convex and minor-affine test functions.

use lamforge::checks::{diagnose, jensen_convex_check, TestFunctionFamily};
use lamforge::{build_laminate, Depth, Matrix, PointConstraint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> lamforge::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let d = 4;
    let entries: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-2.0..=2.0)).collect();
    let m = Matrix::new(d, &entries)?;
    let r = -1.5;
    let p = 2.5;

    let nu = build_laminate(&m, r, Depth::Fixed(6))?;
    let diag = diagnose(&nu, PointConstraint::Exact(r), p)?;
    println!("det M = {:.4}, rate {r}, {} atoms", m.determinant(), nu.atoms.len());
    println!("{diag:#?}");

    let report = jensen_convex_check(&nu, &TestFunctionFamily::standard(d, p));
    println!(
        "jensen: {} functions, max convex excess {:.2e}, max affine gap {:.2e}, passed {}",
        report.checked,
        report.max_convex_excess,
        report.max_affine_gap,
        report.passed()
    );
    Ok(())
}

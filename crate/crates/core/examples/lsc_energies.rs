//! Energies `f(A) = ‖A‖^p + 1/det A` of the affine maps `εI` against maps
//! with the same boundary values and `det ∇v = 1`, built by convex
//! integration. Artifacts go to `out/lsc`.

use lamforge::experiments::{execute, RunConfig, Subcommand};

fn main() -> lamforge::Result<()> {
    let config = RunConfig {
        subcommand: Subcommand::Lsc,
        n: 64,
        iterations: 4,
        out: "out/lsc".into(),
        ..Default::default()
    };
    let run = config.prepare()?;
    let report = execute(&run)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

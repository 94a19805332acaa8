//! Loads a run from JSON, as `lamforge --config` does, and prints the
//! determinant gap report.

use lamforge::experiments::{run_gap, RunConfig};

fn main() -> lamforge::Result<()> {
    let json = r#"{
        "subcommand": "gap",
        "n": 64,
        "iterations": 3,
        "constraint": { "kind": "exact", "rate": 2.0 }
    }"#;
    let run = RunConfig::from_json(json)?.prepare()?;
    println!("config hash {}", run.hash);
    let (gap, _, _) = run_gap(&run)?;
    println!("{gap:#?}");
    Ok(())
}

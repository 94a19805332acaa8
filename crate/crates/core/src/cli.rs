//! Command-line front end: `lamforge <subcommand> [flags]`.
//!
//! Flags override the values of `--config <json>`; `LAMFORGE_SEED`
//! overrides both. Exit codes: 0 success, 2 invalid input, 3 runtime
//! failure (for example exhausted resolution).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser};

use crate::error::{Error, Result};
use crate::experiments::{execute, BoundaryConfig, ConstraintConfig, RunConfig, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "lamforge", version, about = "Laminates and convex integration for prescribed Jacobians")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Subcommand)]
pub enum Command {
    /// Build a laminate towards `det = rate` and tabulate its diagnostics.
    Laminate(Flags),
    /// Solve `det ∇v = J` (or `J1 <= det ∇v <= J2`) with `v = g` on the boundary.
    Solve(Flags),
    /// Approximation sequence on refined grids.
    Approx(Flags),
    /// Energies of `εI` against realized maps with `det = 1`.
    Lsc(Flags),
    /// Pointwise against boundary-determined determinant integrals.
    Gap(Flags),
    /// Residual decay table plus seeded laminate moment table.
    Decay(Flags),
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    #[arg(long)]
    pub dim: Option<usize>,
    /// Cells per side.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Exact rate `J`.
    #[arg(long, visible_alias = "J", allow_hyphen_values = true, conflicts_with_all = ["j1", "j2", "j_file"])]
    pub rate: Option<f64>,
    #[arg(long = "J1", requires = "j2", allow_hyphen_values = true, conflicts_with = "j_file")]
    pub j1: Option<f64>,
    #[arg(long = "J2", requires = "j1", allow_hyphen_values = true)]
    pub j2: Option<f64>,
    /// Per-cell table: one `J` or `J1 J2` per line.
    #[arg(long = "J-file")]
    pub j_file: Option<PathBuf>,
    /// Boundary data: id | 2x | affine:<csv> | file:<path>.
    #[arg(long)]
    pub g: Option<String>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Oscillations per region in the first refinement.
    #[arg(long = "N")]
    pub n_osc: Option<f64>,
    #[arg(long = "freq-ratio")]
    pub freq_ratio: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file mirroring the run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Command {
    fn split(self) -> (Subcommand, Flags) {
        match self {
            Command::Laminate(f) => (Subcommand::Laminate, f),
            Command::Solve(f) => (Subcommand::Solve, f),
            Command::Approx(f) => (Subcommand::Approx, f),
            Command::Lsc(f) => (Subcommand::Lsc, f),
            Command::Gap(f) => (Subcommand::Gap, f),
            Command::Decay(f) => (Subcommand::Decay, f),
        }
    }
}

/// Merges the optional config file with the flags.
pub fn build_config(sub: Subcommand, f: Flags) -> Result<RunConfig> {
    let mut c = match &f.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    c.subcommand = sub;
    if let Some(v) = f.dim {
        c.dim = v;
    }
    if let Some(v) = f.n {
        c.n = v;
    }
    if let Some(v) = f.p {
        c.p = v;
    }
    if let Some(rate) = f.rate {
        c.constraint = Some(ConstraintConfig::Exact { rate });
    }
    if let (Some(j1), Some(j2)) = (f.j1, f.j2) {
        c.constraint = Some(ConstraintConfig::Interval { j1, j2 });
    }
    if let Some(path) = f.j_file {
        c.constraint = Some(ConstraintConfig::CellTable { path });
    }
    if let Some(g) = &f.g {
        c.boundary = BoundaryConfig::parse(g)?;
    }
    if f.depth.is_some() {
        c.depth = f.depth;
    }
    if let Some(v) = f.iters {
        c.iterations = v;
    }
    if f.n_osc.is_some() {
        c.n_osc = f.n_osc;
    }
    if let Some(v) = f.freq_ratio {
        c.freq_ratio = v;
    }
    if let Some(v) = f.seed {
        c.seed = v;
    }
    if let Some(v) = f.out {
        c.out = v;
    }
    Ok(c)
}

fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_RUNTIME
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let (sub, flags) = cli.command.split();
    let run = match build_config(sub, flags).and_then(|c| c.prepare()) {
        Ok(run) => run,
        Err(e) => {
            eprintln!("lamforge: {e}");
            return EXIT_VALIDATION;
        }
    };
    match execute(&run) {
        Ok(_) => {
            println!("{} ({})", run.config.out.join("report.json").display(), run.hash);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("lamforge: {e}");
            exit_code(&e)
        }
    }
}

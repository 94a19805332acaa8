//! CSV tables, config hashing and gnuplot script emission.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::checks::LaminateDiagnostics;
use crate::error::Result;

/// First 16 hex digits of the SHA-256 of the compact JSON encoding.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// A table whose rows all carry the same leading `config_hash` column.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, out: &mut impl Write, config_hash: Option<&str>) -> Result<()> {
        let line = |cells: &[String]| match config_hash {
            Some(h) => format!("{h},{}", cells.join(",")),
            None => cells.join(","),
        };
        let head = match config_hash {
            Some(_) => format!("config_hash,{}", self.header.join(",")),
            None => self.header.join(","),
        };
        writeln!(out, "{head}")?;
        for r in &self.rows {
            writeln!(out, "{}", line(r))?;
        }
        Ok(())
    }

    pub fn to_csv(&self, config_hash: Option<&str>) -> Result<String> {
        let mut buf = Vec::new();
        self.write(&mut buf, config_hash)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Shorthand for a row of displayable cells.
pub fn row(cells: &[&dyn Display]) -> Vec<String> {
    cells.iter().map(|c| c.to_string()).collect()
}

pub const LAMINATE_HEADER: [&str; 9] = [
    "dim",
    "p",
    "rate",
    "depth",
    "barycenter_err",
    "moment_p",
    "tightness_ratio",
    "bad_mass",
    "minors_gap",
];

pub fn laminate_row(dim: usize, p: f64, rate: f64, diag: &LaminateDiagnostics) -> Vec<String> {
    row(&[
        &dim,
        &p,
        &rate,
        &diag.depth,
        &diag.barycenter_err,
        &diag.moment_p,
        &diag.tightness_ratio,
        &diag.bad_mass.to_f64(),
        &diag.minors_gap,
    ])
}

/// gnuplot script drawing columns `ys` of `csv` against column `x`
/// (1-based column numbers of the written file, hash column included).
pub fn gnuplot_script(csv: &str, title: &str, x: (usize, &str), ys: &[(usize, &str)], log_y: bool) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key autotitle columnhead\n");
    s.push_str(&format!("set title '{title}'\n"));
    s.push_str(&format!("set xlabel '{}'\n", x.1));
    if log_y {
        s.push_str("set logscale y\n");
    }
    s.push_str("set terminal pngcairo size 900,600\n");
    s.push_str(&format!("set output '{}.png'\n", csv.trim_end_matches(".csv")));
    let series: Vec<String> = ys
        .iter()
        .map(|(c, name)| format!("'{csv}' using {}:{c} with linespoints title '{name}'", x.0))
        .collect();
    s.push_str(&format!("plot {}\n", series.join(", \\\n     ")));
    s
}

/// Output directory with a fixed set of artifact names.
#[derive(Clone, Debug)]
pub struct OutDir {
    pub root: PathBuf,
}

impl OutDir {
    pub fn create(root: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(root.as_ref())?;
        Ok(OutDir {
            root: root.as_ref().to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.path(name), contents)?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, &s)
    }
}

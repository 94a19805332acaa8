//! Run configuration and the experiment drivers behind the CLI.
//!
//! A [`RunConfig`] is validated into a [`Prepared`] run before any compute
//! starts; every driver then returns a serializable report and, through
//! [`execute`], writes its artifacts (`diagnostics.csv`, `report.json`,
//! `plot.gp` and the laminate or map JSON) to the output directory.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checks::{diagnose, moment_p};
use crate::constraint::{check_exponent, ConstraintSpec, Field, PointConstraint};
use crate::error::{Error, Result};
use crate::export::{self, config_hash, row, OutDir, Table};
use crate::grid::SimplicialGrid;
use crate::integrator::{
    solve_constraint, BoundaryData, IntegratorOpts, IterationDiagnostics, SolveReport,
};
use crate::laminate::{build_laminate, laminate_for_constraint, Depth, DiscreteLaminate, Frame, DEFAULT_DEPTH};
use crate::matrix::{Matrix, MAX_DIM};
use crate::pamap::PiecewiseAffineMap;
use crate::realize::RealizeOpts;

pub const SEED_ENV: &str = "LAMFORGE_SEED";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kappa {
    /// `κ(s) = 1/s` for `s > 0`, `+∞` otherwise.
    #[default]
    Reciprocal,
    None,
}

/// `f(A) = ‖A‖_F^p + κ(det A)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyDensity {
    pub p: f64,
    pub kappa: Kappa,
    /// Coercivity constant `M`, reported only.
    pub m_bound: f64,
}

impl EnergyDensity {
    pub fn new(p: f64, kappa: Kappa, dim: usize) -> Result<Self> {
        check_exponent(p, dim)?;
        Ok(EnergyDensity { p, kappa, m_bound: 1.0 })
    }

    pub fn kappa(&self, s: f64) -> f64 {
        match self.kappa {
            Kappa::Reciprocal if s > 0.0 => 1.0 / s,
            Kappa::Reciprocal => f64::INFINITY,
            Kappa::None => 0.0,
        }
    }

    pub fn value(&self, a: &Matrix) -> f64 {
        a.frobenius_norm().powf(self.p) + self.kappa(a.determinant())
    }

    /// `limsup_{s→∞} κ(s) / s^{p/d} < ∞`; holds for both selectors.
    pub fn growth_condition_holds(&self, dim: usize) -> bool {
        let s: f64 = 1e12;
        self.kappa(s) / s.powf(self.p / dim as f64) < 1.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subcommand {
    Laminate,
    #[default]
    Solve,
    Approx,
    Lsc,
    Gap,
    Decay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ConstraintConfig {
    Exact { rate: f64 },
    Interval { j1: f64, j2: f64 },
    /// Whitespace or comma separated values, one line per cell: `J` for an
    /// exact rate, `J1 J2` for an interval.
    CellTable { path: PathBuf },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BoundaryConfig {
    #[default]
    Id,
    #[serde(rename = "2x")]
    TwoX,
    /// Row-major `d × d` matrix, optionally followed by `d` offsets.
    Affine { values: Vec<f64> },
    /// A map JSON on the run's grid; its boundary vertex values are used.
    File { path: PathBuf },
}

impl BoundaryConfig {
    /// `id`, `2x`, `affine:<csv>` or `file:<path>`.
    pub fn parse(s: &str) -> Result<Self> {
        if s == "id" {
            return Ok(BoundaryConfig::Id);
        }
        if s == "2x" {
            return Ok(BoundaryConfig::TwoX);
        }
        if let Some(rest) = s.strip_prefix("affine:") {
            let values = rest
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Config(format!("affine boundary data: {e}")))?;
            return Ok(BoundaryConfig::Affine { values });
        }
        if let Some(rest) = s.strip_prefix("file:") {
            return Ok(BoundaryConfig::File { path: rest.into() });
        }
        Err(Error::Config(format!("unknown boundary selector '{s}' (id | 2x | affine:<csv> | file:<path>)")))
    }

    /// `(A, c)` for the closed-form selectors.
    fn affine(&self, dim: usize) -> Result<Option<(Matrix, Vec<f64>)>> {
        Ok(match self {
            BoundaryConfig::Id => Some((Matrix::identity(dim)?, vec![0.0; dim])),
            BoundaryConfig::TwoX => Some((Matrix::identity(dim)?.scale(2.0), vec![0.0; dim])),
            BoundaryConfig::Affine { values } => {
                let (mat, off) = if values.len() == dim * dim {
                    (&values[..], vec![0.0; dim])
                } else if values.len() == dim * dim + dim {
                    (&values[..dim * dim], values[dim * dim..].to_vec())
                } else {
                    return Err(Error::Config(format!(
                        "affine boundary data needs {} or {} values for d = {dim}, got {}",
                        dim * dim,
                        dim * dim + dim,
                        values.len()
                    )));
                };
                if off.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("affine offset".into()));
                }
                Some((Matrix::new(dim, mat)?, off))
            }
            BoundaryConfig::File { .. } => None,
        })
    }
}

fn default_dim() -> usize {
    2
}
fn default_n() -> usize {
    64
}
fn default_p() -> f64 {
    1.5
}
fn default_iterations() -> usize {
    6
}
fn default_freq_ratio() -> f64 {
    8.0
}
fn default_levels() -> usize {
    3
}
fn default_eps() -> Vec<f64> {
    vec![0.5, 0.1, 0.02]
}
fn default_samples() -> usize {
    8
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_slope() -> f64 {
    1.0
}
fn default_frame() -> Frame {
    Frame::Lattice
}

/// Everything a run needs; mirrored one-to-one by the JSON config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub subcommand: Subcommand,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_p")]
    pub p: f64,
    /// Defaults: rate 3 for `laminate`, 1 for `approx` and `lsc`, 2 otherwise.
    #[serde(default)]
    pub constraint: Option<ConstraintConfig>,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Laminate depth for `laminate` and `decay` tables (default 8), first
    /// refinement depth `k0` for the integrator (default 3).
    #[serde(default)]
    pub depth: Option<usize>,
    /// Oscillations per region in the first refinement (default 4).
    #[serde(default)]
    pub n_osc: Option<f64>,
    #[serde(default = "default_freq_ratio")]
    pub freq_ratio: f64,
    #[serde(default = "default_slope")]
    pub cutoff_slope: f64,
    #[serde(default = "default_frame")]
    pub frame: Frame,
    /// Resolutions `n · 2^{j-1}`, `j = 1..=levels`, for `approx`.
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    /// Random laminates in the `decay` table.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    fn integrator_opts(&self) -> IntegratorOpts {
        IntegratorOpts {
            k0: self.depth.unwrap_or(3),
            n0: self.n_osc.unwrap_or(4.0),
            freq_ratio: self.freq_ratio,
            frame: self.frame,
            realize: RealizeOpts {
                cutoff_slope: self.cutoff_slope,
            },
            ..Default::default()
        }
    }

    fn default_rate(&self) -> f64 {
        match self.subcommand {
            Subcommand::Laminate => 3.0,
            Subcommand::Approx | Subcommand::Lsc => 1.0,
            _ => 2.0,
        }
    }

    /// Validates the config against every downstream precondition and loads
    /// referenced files. `LAMFORGE_SEED`, when set, replaces `seed`.
    pub fn prepare(&self) -> Result<Prepared> {
        let mut config = self.clone();
        if let Ok(s) = std::env::var(SEED_ENV) {
            config.seed = s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}='{s}' is not an unsigned integer")))?;
        }
        let d = config.dim;
        let grid_based = config.subcommand != Subcommand::Laminate;
        let max_dim = if grid_based { 3 } else { MAX_DIM };
        if !(2..=max_dim).contains(&d) {
            return Err(Error::Dimension(d));
        }
        check_exponent(config.p, d)?;
        if config.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if let Some(k) = config.depth {
            Depth::Fixed(k).resolve()?;
        }
        let opts = config.integrator_opts();
        opts.validate()?;

        let constraint = config
            .constraint
            .clone()
            .unwrap_or(ConstraintConfig::Exact { rate: config.default_rate() });
        let fields = match &constraint {
            ConstraintConfig::Exact { rate } => ConstraintFields::Exact(Field::Constant(*rate)),
            ConstraintConfig::Interval { j1, j2 } => ConstraintFields::Interval(Field::Constant(*j1), Field::Constant(*j2)),
            ConstraintConfig::CellTable { path } => read_cell_table(path)?,
        };

        let mut grid = None;
        if grid_based && config.subcommand != Subcommand::Lsc {
            let n_max = match config.subcommand {
                Subcommand::Approx => {
                    if config.levels == 0 || config.levels > 12 {
                        return Err(Error::Config("levels must lie in 1..=12".into()));
                    }
                    config.n.checked_shl(config.levels as u32 - 1).unwrap_or(usize::MAX)
                }
                _ => config.n,
            };
            SimplicialGrid::unit(d, n_max)?;
            grid = Some(SimplicialGrid::unit(d, config.n)?);
        }
        if config.subcommand == Subcommand::Lsc {
            if config.eps.is_empty() || config.eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                return Err(Error::Config("eps values must be positive and finite".into()));
            }
            SimplicialGrid::unit(d, config.n)?;
        }

        let spec = match &fields {
            ConstraintFields::Exact(r) => ConstraintSpec::exact(r.clone(), config.p, d)?,
            ConstraintFields::Interval(a, b) => ConstraintSpec::interval(a.clone(), b.clone(), config.p, d)?,
        };
        let is_table = matches!(constraint, ConstraintConfig::CellTable { .. });
        match config.subcommand {
            Subcommand::Laminate | Subcommand::Approx | Subcommand::Gap | Subcommand::Lsc if is_table => {
                return Err(Error::Config("cell tables are only accepted by solve and decay".into()));
            }
            _ => {}
        }
        if let Some(g) = &grid {
            spec.check_cells(g.cell_count())?;
        }
        if config.subcommand == Subcommand::Gap {
            if config.boundary != BoundaryConfig::Id {
                return Err(Error::Config("gap runs use g = id".into()));
            }
            if !matches!(constraint, ConstraintConfig::Exact { .. }) {
                return Err(Error::Config("gap runs need a constant exact rate".into()));
            }
        }
        if config.subcommand == Subcommand::Decay && !matches!(constraint, ConstraintConfig::Exact { .. }) {
            return Err(Error::Config("decay tables need a constant exact rate".into()));
        }

        let boundary = match (&config.boundary, config.subcommand) {
            (BoundaryConfig::File { path }, Subcommand::Solve | Subcommand::Decay) => {
                let grid = grid.as_ref().expect("grid-based subcommand");
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("boundary file {}: {e}", path.display())))?;
                let map = PiecewiseAffineMap::from_json(&text)?;
                if map.grid.dim() != d || map.grid.n() != grid.n() || map.grid.bbox() != grid.bbox() {
                    return Err(Error::Config("boundary map is not on the run's grid".into()));
                }
                Boundary::Vertices(map.values)
            }
            (BoundaryConfig::File { .. }, _) => {
                return Err(Error::Config("file boundary data is only accepted by solve and decay".into()));
            }
            (b, _) => {
                let (a, c) = b.affine(d)?.expect("closed-form selector");
                Boundary::Affine(a, c)
            }
        };

        let hash = config_hash(&RunConfig {
            out: PathBuf::new(),
            ..config.clone()
        })?;
        Ok(Prepared {
            config,
            hash,
            opts,
            spec,
            boundary,
            grid,
        })
    }
}

enum ConstraintFields {
    Exact(Field),
    Interval(Field, Field),
}

fn read_cell_table(path: &std::path::Path) -> Result<ConstraintFields> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cell table {}: {e}", path.display())))?;
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("cell table line {}: {e}", i + 1)))?;
        if !(1..=2).contains(&vals.len()) || width.is_some_and(|w| w != vals.len()) {
            return Err(Error::Config(format!("cell table line {}: expected a consistent 1 or 2 columns", i + 1)));
        }
        width = Some(vals.len());
        lo.push(vals[0]);
        hi.push(*vals.last().expect("nonempty row"));
    }
    match width {
        None => Err(Error::Config("cell table is empty".into())),
        Some(1) => Ok(ConstraintFields::Exact(Field::Cells(lo))),
        Some(_) => Ok(ConstraintFields::Interval(Field::Cells(lo), Field::Cells(hi))),
    }
}

#[derive(Clone, Debug)]
enum Boundary {
    Affine(Matrix, Vec<f64>),
    Vertices(Vec<f64>),
}

impl Boundary {
    fn data(&self) -> BoundaryData {
        match self {
            Boundary::Affine(a, c) => BoundaryData::affine(*a, c.clone()),
            Boundary::Vertices(v) => BoundaryData::Vertices(v.clone()),
        }
    }
}

/// A validated run.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: RunConfig,
    /// Hash of the effective config without the output directory, written
    /// into every CSV row.
    pub hash: String,
    pub opts: IntegratorOpts,
    pub spec: ConstraintSpec,
    boundary: Boundary,
    grid: Option<SimplicialGrid>,
}

impl Prepared {
    fn grid(&self) -> &SimplicialGrid {
        self.grid.as_ref().expect("grid-based subcommand")
    }

    fn constant_rate(&self) -> f64 {
        match self.spec.at(0) {
            PointConstraint::Exact(r) => r,
            PointConstraint::Interval(a, b) => {
                if a.is_finite() && b.is_finite() {
                    0.5 * (a + b)
                } else if a.is_finite() {
                    a
                } else {
                    b
                }
            }
        }
    }
}

// ---------------------------------------------------------------- laminate

#[derive(Clone, Debug, Serialize)]
pub struct LaminateRunReport {
    pub config_hash: String,
    pub dim: usize,
    pub p: f64,
    pub rate: f64,
    pub root: Matrix,
    pub depth: usize,
    pub atoms: usize,
    pub rows: Vec<crate::checks::LaminateDiagnostics>,
}

/// Builds the laminate for the root matrix (`g`'s linear part, identity by
/// default) at every depth `1..=k` and tabulates its diagnostics.
pub fn run_laminate(run: &Prepared) -> Result<(LaminateRunReport, DiscreteLaminate, Table)> {
    let c = &run.config;
    let Boundary::Affine(m, _) = &run.boundary else {
        unreachable!("validated")
    };
    let pc = run.spec.at(0);
    let k = c.depth.unwrap_or(DEFAULT_DEPTH);
    let mut table = Table::new(&export::LAMINATE_HEADER);
    let mut rows = Vec::new();
    let mut last = None;
    for depth in 1..=k.max(1) {
        let nu = laminate_for_constraint(m, pc, Depth::Fixed(depth))?;
        let diag = diagnose(&nu, PointConstraint::Exact(nu.rate), c.p)?;
        table.push(export::laminate_row(c.dim, c.p, nu.rate, &diag));
        rows.push(diag);
        last = Some(nu);
    }
    let nu = last.expect("at least one depth");
    let report = LaminateRunReport {
        config_hash: run.hash.clone(),
        dim: c.dim,
        p: c.p,
        rate: nu.rate,
        root: *m,
        depth: nu.depth,
        atoms: nu.atoms.len(),
        rows,
    };
    Ok((report, nu, table))
}

// ------------------------------------------------------------------- solve

#[derive(Clone, Debug, Serialize)]
pub struct SolveRunReport {
    pub config_hash: String,
    pub n: usize,
    pub iterations: usize,
    pub opts: IntegratorOpts,
    pub solve: SolveReport,
    pub boundary_identical: bool,
}

fn boundary_identical(a: &PiecewiseAffineMap, b: &PiecewiseAffineMap) -> bool {
    let d = a.dim();
    (0..a.grid.vertex_count())
        .filter(|&v| a.grid.is_boundary_vertex(v))
        .all(|v| (0..d).all(|i| a.value(v)[i].to_bits() == b.value(v)[i].to_bits()))
}

pub fn run_solve(run: &Prepared) -> Result<(SolveRunReport, PiecewiseAffineMap)> {
    let grid = run.grid();
    let g = run.boundary.data();
    let (map, solve) = solve_constraint(grid, &g, &run.spec, run.config.iterations, &run.opts)?;
    let reference = g.extend(grid)?;
    Ok((
        SolveRunReport {
            config_hash: run.hash.clone(),
            n: grid.n(),
            iterations: run.config.iterations,
            opts: run.opts,
            boundary_identical: boundary_identical(&map, &reference),
            solve,
        },
        map,
    ))
}

pub fn decay_table(diag: &IterationDiagnostics, opts: &IntegratorOpts, p: f64, dim: usize) -> Table {
    let mut t = Table::new(&[
        "iteration",
        "depth",
        "residual",
        "decay_ratio",
        "idealized_ratio",
        "increment_lp",
        "violation_volume",
    ]);
    t.push(row(&[&0, &0, &diag.initial_residual, &"", &"", &0.0, &diag.initial_violation_volume]));
    for r in &diag.records {
        let (k, _) = opts.schedule(r.iteration - 1);
        t.push(row(&[
            &r.iteration,
            &k,
            &r.residual,
            &r.decay_ratio,
            &idealized_ratio(k, p, dim),
            &r.increment_lp,
            &r.violation_volume,
        ]));
    }
    t
}

/// Residual ratio of a depth-`k` laminate with no realization error: the
/// bad mass halves and the bad gap doubles per level, `(2^{p/d} / 2)^k`.
pub fn idealized_ratio(k: usize, p: f64, dim: usize) -> f64 {
    2f64.powf(-(k as f64) * (1.0 - p / dim as f64))
}

// ------------------------------------------------------------ approximation

#[derive(Clone, Debug, Serialize)]
pub struct ApproxLevel {
    pub j: usize,
    pub n: usize,
    pub n_osc: f64,
    /// `‖u_j − u‖_{L^p}` by vertex quadrature.
    pub distance_lp: f64,
    pub gradient_lp: f64,
    pub violation_volume: f64,
    pub area_within_005: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ApproxReport {
    pub config_hash: String,
    pub levels: Vec<ApproxLevel>,
    pub distances_decreasing: bool,
    /// `max_j ‖∇u_j‖_p / min_j ‖∇u_j‖_p`.
    pub gradient_band: f64,
    pub gradient_band_within_3: bool,
}

/// `u_j` at resolution `n · 2^{j-1}` with `N_0 · 2^{j-1}` oscillations, so the
/// oscillation period shrinks with the mesh.
pub fn run_approximation(run: &Prepared) -> Result<ApproxReport> {
    let c = &run.config;
    let Boundary::Affine(a, off) = &run.boundary else {
        unreachable!("validated")
    };
    let g = run.boundary.data();
    let mut levels = Vec::new();
    for j in 1..=c.levels {
        let scale = 1usize << (j - 1);
        let grid = SimplicialGrid::unit(c.dim, c.n * scale)?;
        let mut opts = run.opts;
        opts.n0 *= scale as f64;
        let (map, rep) = solve_constraint(&grid, &g, &run.spec, c.iterations, &opts)?;
        let h = grid.spacing();
        let w: f64 = h.iter().product();
        let mut acc = 0.0;
        for v in 0..grid.vertex_count() {
            let x = grid.vertex_coord(v);
            let u: Vec<f64> = a.mul_vec(&x).iter().zip(off).map(|(y, s)| y + s).collect();
            let diff: f64 = map.value(v).iter().zip(&u).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            acc += w * diff.powf(c.p);
        }
        levels.push(ApproxLevel {
            j,
            n: grid.n(),
            n_osc: opts.n0,
            distance_lp: acc.powf(1.0 / c.p),
            gradient_lp: rep.stats.lp_norm,
            violation_volume: rep.violation_volume,
            area_within_005: rep.area_within_005,
        });
    }
    let distances_decreasing = levels.windows(2).all(|w| w[1].distance_lp < w[0].distance_lp)
        || levels.iter().all(|l| l.distance_lp == 0.0);
    let gmax = levels.iter().map(|l| l.gradient_lp).fold(0.0, f64::max);
    let gmin = levels.iter().map(|l| l.gradient_lp).fold(f64::INFINITY, f64::min);
    let band = if gmin > 0.0 { gmax / gmin } else { f64::INFINITY };
    Ok(ApproxReport {
        config_hash: run.hash.clone(),
        levels,
        distances_decreasing,
        gradient_band: band,
        gradient_band_within_3: band <= 3.0,
    })
}

// --------------------------------------------------------------------- lsc

#[derive(Clone, Debug, Serialize)]
pub struct LscRow {
    pub eps: f64,
    /// `f(εI)`.
    pub affine_energy: f64,
    /// Volume-weighted mean of `f(∇v)` over cells with `det > 0` and
    /// `|det − 1| <= 0.05`.
    pub mean_energy: f64,
    pub violation_volume: f64,
    pub nonpositive_volume: f64,
    pub gradient_lp: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LscReport {
    pub config_hash: String,
    pub energy: EnergyDensity,
    pub growth_condition_holds: bool,
    pub rows: Vec<LscRow>,
    /// Affine energies increase strictly as `ε` decreases.
    pub affine_increasing: bool,
    /// Recorded common bound: the largest realized mean energy.
    pub k_bound: f64,
    /// `K` lies below the affine energy of the smallest `ε`.
    pub witness: bool,
}

/// Energy of `map` over the admissible cells, with the excluded volumes.
pub fn realized_energy(map: &PiecewiseAffineMap, energy: &EnergyDensity, rate: f64) -> (f64, f64, f64) {
    let vol = map.grid.cell_volume();
    let (mut e, mut v_in, mut v_bad, mut v_neg) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..map.grid.cell_count() {
        let a = map.gradient(c);
        let det = a.determinant();
        if det <= 0.0 {
            v_neg += vol;
        } else if (det - rate).abs() > 0.05 {
            v_bad += vol;
        } else {
            e += vol * energy.value(&a);
            v_in += vol;
        }
    }
    let mean = if v_in > 0.0 { e / v_in } else { 0.0 };
    (mean, v_bad, v_neg)
}

pub fn run_lsc(run: &Prepared) -> Result<LscReport> {
    let c = &run.config;
    let energy = EnergyDensity::new(c.p, Kappa::Reciprocal, c.dim)?;
    let grid = SimplicialGrid::unit(c.dim, c.n)?;
    let spec = ConstraintSpec::exact(1.0, c.p, c.dim)?;
    let mut eps = c.eps.clone();
    eps.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut rows = Vec::new();
    for &e in &eps {
        let a = Matrix::identity(c.dim)?.scale(e);
        let g = BoundaryData::linear(a);
        let (map, rep) = solve_constraint(&grid, &g, &spec, c.iterations, &run.opts)?;
        let (mean, v_bad, v_neg) = realized_energy(&map, &energy, 1.0);
        rows.push(LscRow {
            eps: e,
            affine_energy: energy.value(&a),
            mean_energy: mean,
            violation_volume: v_bad,
            nonpositive_volume: v_neg,
            gradient_lp: rep.stats.lp_norm,
        });
    }
    let affine_increasing = rows.windows(2).all(|w| w[1].affine_energy > w[0].affine_energy);
    let k_bound = rows.iter().map(|r| r.mean_energy).fold(0.0, f64::max);
    let witness = rows.last().is_some_and(|r| k_bound < r.affine_energy);
    Ok(LscReport {
        config_hash: run.hash.clone(),
        growth_condition_holds: energy.growth_condition_holds(c.dim),
        energy,
        rows,
        affine_increasing,
        k_bound,
        witness,
    })
}

// --------------------------------------------------------------------- gap

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    pub config_hash: String,
    pub rate: f64,
    /// `Σ vol det ∇v`.
    pub pointwise_det_integral: f64,
    /// `∫ det ∇g`, shared by every map with the boundary values of `g`.
    pub reference_integral: f64,
    pub gap: f64,
    /// `(J − 1) |Ω|`, the gap of an exact solution.
    pub exact_solution_gap: f64,
    pub area_within_005: f64,
}

pub fn run_gap(run: &Prepared) -> Result<(GapReport, IterationDiagnostics, PiecewiseAffineMap)> {
    let (rep, map) = run_solve(run)?;
    let s = rep.solve;
    let rate = run.constant_rate();
    let pointwise = s.stats.pointwise_det_integral;
    Ok((
        GapReport {
            config_hash: run.hash.clone(),
            rate,
            pointwise_det_integral: pointwise,
            reference_integral: s.reference_det_integral,
            gap: pointwise - s.reference_det_integral,
            exact_solution_gap: (rate - 1.0) * run.grid().total_volume(),
            area_within_005: s.area_within_005,
        },
        s.diagnostics,
        map,
    ))
}

// ------------------------------------------------------------------- decay

#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub config_hash: String,
    pub seed: u64,
    pub iterations: Vec<crate::integrator::IterationRecord>,
    pub initial_residual: f64,
    pub max_decay_ratio: f64,
    /// `Σ increments / first increment`.
    pub increment_sum_ratio: f64,
    /// Largest `moment_p` per depth over the random laminates.
    pub moment_by_depth: Vec<f64>,
}

/// Residual decay of the integrator plus a seeded table of `moment_p` and
/// bad mass against depth for random roots with entries in `[-2, 2]`.
pub fn run_decay(run: &Prepared) -> Result<(DecayReport, Table, Table)> {
    let c = &run.config;
    let (rep, _) = run_solve(run)?;
    let diag = rep.solve.diagnostics;
    let iter_table = decay_table(&diag, &run.opts, c.p, c.dim);

    let rate = run.constant_rate();
    let k_max = c.depth.unwrap_or(DEFAULT_DEPTH).clamp(1, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut lam = Table::new(&["sample", "depth", "moment_p", "bad_mass"]);
    let mut moment_by_depth = vec![0.0f64; k_max];
    for s in 0..c.samples {
        let entries: Vec<f64> = (0..c.dim * c.dim).map(|_| rng.gen_range(-2.0..=2.0)).collect();
        let m = Matrix::new(c.dim, &entries)?;
        for k in 1..=k_max {
            let nu = build_laminate(&m, rate, Depth::Fixed(k))?;
            let mp = moment_p(&nu, &m, c.p);
            moment_by_depth[k - 1] = moment_by_depth[k - 1].max(mp);
            lam.push(row(&[&s, &k, &mp, &nu.bad_mass().to_f64()]));
        }
    }

    let first = diag.records.first().map_or(0.0, |r| r.increment_lp);
    let total: f64 = diag.records.iter().map(|r| r.increment_lp).sum();
    Ok((
        DecayReport {
            config_hash: run.hash.clone(),
            seed: c.seed,
            initial_residual: diag.initial_residual,
            max_decay_ratio: diag.records.iter().map(|r| r.decay_ratio).fold(0.0, f64::max),
            increment_sum_ratio: if first > 0.0 { total / first } else { 0.0 },
            iterations: diag.records,
            moment_by_depth,
        },
        iter_table,
        lam,
    ))
}

// ------------------------------------------------------------- artifacts

fn decay_plot() -> String {
    export::gnuplot_script(
        "diagnostics.csv",
        "residual decay",
        (2, "iteration"),
        &[(4, "residual"), (7, "increment_lp"), (8, "violation_volume")],
        true,
    )
}

/// Runs the prepared subcommand and writes its artifacts under
/// `config.out`. Returns the report as JSON.
pub fn execute(run: &Prepared) -> Result<serde_json::Value> {
    let out = OutDir::create(&run.config.out)?;
    let hash = Some(run.hash.as_str());
    out.write_json("config.json", &run.config)?;
    let report = match run.config.subcommand {
        Subcommand::Laminate => {
            let (rep, nu, table) = run_laminate(run)?;
            out.write("laminate.json", &nu.to_json()?)?;
            out.write("diagnostics.csv", &table.to_csv(hash)?)?;
            out.write(
                "plot.gp",
                &export::gnuplot_script(
                    "diagnostics.csv",
                    "laminate moments",
                    (5, "depth"),
                    &[(7, "moment_p"), (9, "bad_mass")],
                    true,
                ),
            )?;
            serde_json::to_value(rep)?
        }
        Subcommand::Solve => {
            let (rep, map) = run_solve(run)?;
            let table = decay_table(&rep.solve.diagnostics, &run.opts, run.config.p, run.config.dim);
            out.write("diagnostics.csv", &table.to_csv(hash)?)?;
            out.write("map.json", &map.to_json()?)?;
            let mut grads = Vec::new();
            map.write_gradient_csv(&mut grads, hash)?;
            out.write("gradients.csv", &String::from_utf8(grads).expect("utf-8"))?;
            out.write("plot.gp", &decay_plot())?;
            serde_json::to_value(rep)?
        }
        Subcommand::Approx => {
            let rep = run_approximation(run)?;
            let mut t = Table::new(&["j", "n", "n_osc", "distance_lp", "gradient_lp", "violation_volume", "area_within_005"]);
            for l in &rep.levels {
                t.push(row(&[&l.j, &l.n, &l.n_osc, &l.distance_lp, &l.gradient_lp, &l.violation_volume, &l.area_within_005]));
            }
            out.write("diagnostics.csv", &t.to_csv(hash)?)?;
            out.write(
                "plot.gp",
                &export::gnuplot_script("diagnostics.csv", "approximation", (3, "n"), &[(5, "distance_lp"), (6, "gradient_lp")], true),
            )?;
            serde_json::to_value(rep)?
        }
        Subcommand::Lsc => {
            let rep = run_lsc(run)?;
            let mut t = Table::new(&["eps", "affine_energy", "mean_energy", "violation_volume", "nonpositive_volume", "gradient_lp"]);
            for r in &rep.rows {
                t.push(row(&[&r.eps, &r.affine_energy, &r.mean_energy, &r.violation_volume, &r.nonpositive_volume, &r.gradient_lp]));
            }
            out.write("diagnostics.csv", &t.to_csv(hash)?)?;
            out.write(
                "plot.gp",
                &export::gnuplot_script("diagnostics.csv", "energy", (2, "eps"), &[(3, "affine_energy"), (4, "mean_energy")], true),
            )?;
            serde_json::to_value(rep)?
        }
        Subcommand::Gap => {
            let (rep, diag, map) = run_gap(run)?;
            out.write("diagnostics.csv", &decay_table(&diag, &run.opts, run.config.p, run.config.dim).to_csv(hash)?)?;
            out.write("map.json", &map.to_json()?)?;
            out.write("plot.gp", &decay_plot())?;
            serde_json::to_value(rep)?
        }
        Subcommand::Decay => {
            let (rep, iters, lam) = run_decay(run)?;
            out.write("diagnostics.csv", &iters.to_csv(hash)?)?;
            out.write("laminates.csv", &lam.to_csv(hash)?)?;
            out.write("plot.gp", &decay_plot())?;
            serde_json::to_value(rep)?
        }
    };
    out.write_json("report.json", &report)?;
    Ok(report)
}

//! Residual-driven convex integration and the prescribed-Jacobian solver.
//!
//! Each refinement finds the violating cells, groups them into connected
//! regions of constant gradient and constraint, builds a laminate towards
//! the constraint for every region and realizes it in place. Boundary
//! vertices are never written.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::constraint::{ConstraintSpec, Field, PointConstraint};
use crate::error::{Error, Result};
use crate::grid::SimplicialGrid;
use crate::laminate::{laminate_for_constraint_in, Depth, Frame};
use crate::matrix::Matrix;
use crate::pamap::{GradientStats, PiecewiseAffineMap};
use crate::realize::{same_gradient, RealizeOpts, Realizer};

/// Cells with `R > VIOLATION_TOL (1 + |J|)` are refined.
pub const VIOLATION_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IntegratorOpts {
    /// Laminate depth of the first refinement; refinement `l` uses `k0 + l`.
    pub k0: usize,
    /// Upper bound on the per-refinement depth.
    pub k_max: usize,
    /// Oscillations across a region in the first refinement; refinement
    /// `l` uses `n0 · 2^l`.
    pub n0: f64,
    pub freq_ratio: f64,
    pub frame: Frame,
    pub realize: RealizeOpts,
    /// Early stop once the residual falls to this fraction of the initial one.
    pub target_ratio: f64,
}

impl Default for IntegratorOpts {
    fn default() -> Self {
        IntegratorOpts {
            k0: 3,
            k_max: 12,
            n0: 4.0,
            freq_ratio: 8.0,
            frame: Frame::Lattice,
            realize: RealizeOpts { cutoff_slope: 1.0 },
            target_ratio: 1e-3,
        }
    }
}

impl IntegratorOpts {
    pub fn validate(&self) -> Result<()> {
        if self.k0 == 0 || self.k0 > self.k_max {
            return Err(Error::Config(format!("need 1 <= k0 <= k_max, got k0 = {}", self.k0)));
        }
        if !(self.n0 >= 1.0 && self.n0.is_finite()) {
            return Err(Error::Config(format!("N must be at least 1, got {}", self.n0)));
        }
        if !(self.freq_ratio >= 1.0 && self.freq_ratio.is_finite()) {
            return Err(Error::Config(format!("freq_ratio must be at least 1, got {}", self.freq_ratio)));
        }
        if !(self.realize.cutoff_slope > 0.0 && self.realize.cutoff_slope.is_finite()) {
            return Err(Error::Config("cutoff slope must be positive".into()));
        }
        if !(self.target_ratio >= 0.0 && self.target_ratio < 1.0) {
            return Err(Error::Config("target ratio must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// `(k_l, N_l)` for refinement `l` (0-based).
    pub fn schedule(&self, l: usize) -> (usize, f64) {
        ((self.k0 + l).min(self.k_max), self.n0 * 2f64.powi(l as i32))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StepStats {
    pub depth: usize,
    pub n_osc: f64,
    pub residual_before: f64,
    pub residual: f64,
    /// `Σ vol ‖∇v_new - ∇v_old‖^p`.
    pub increment_lp: f64,
    pub violation_volume: f64,
    pub regions: usize,
    /// Regions (or sub-regions) too small for the requested oscillation.
    pub skipped: usize,
    pub skipped_volume: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual: f64,
    pub decay_ratio: f64,
    pub increment_lp: f64,
    pub violation_volume: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IterationDiagnostics {
    pub initial_residual: f64,
    pub initial_violation_volume: f64,
    pub records: Vec<IterationRecord>,
    /// Residual reached the early-stop target.
    pub converged: bool,
}

impl IterationDiagnostics {
    pub fn final_residual(&self) -> f64 {
        self.records.last().map_or(self.initial_residual, |r| r.residual)
    }

    pub fn write_csv(&self, out: &mut impl Write, config_hash: Option<&str>) -> Result<()> {
        let prefix = |s: String| match config_hash {
            Some(h) => format!("{h},{s}"),
            None => s,
        };
        let head = "iteration,residual,decay_ratio,increment_lp,violation_volume".to_string();
        writeln!(out, "{}", if config_hash.is_some() { format!("config_hash,{head}") } else { head })?;
        writeln!(
            out,
            "{}",
            prefix(format!("0,{},,0,{}", self.initial_residual, self.initial_violation_volume))
        )?;
        for r in &self.records {
            writeln!(
                out,
                "{}",
                prefix(format!(
                    "{},{},{},{},{}",
                    r.iteration, r.residual, r.decay_ratio, r.increment_lp, r.violation_volume
                ))
            )?;
        }
        Ok(())
    }
}

fn check_spec(map: &PiecewiseAffineMap, spec: &ConstraintSpec) -> Result<()> {
    if spec.dim() != map.dim() {
        return Err(Error::Shape(format!(
            "constraint is for d = {}, map has d = {}",
            spec.dim(),
            map.dim()
        )));
    }
    spec.check_cells(map.grid.cell_count())
}

/// `Σ_cells vol · max{R, 0}^{p/d}`.
pub fn residual(map: &PiecewiseAffineMap, spec: &ConstraintSpec) -> Result<f64> {
    check_spec(map, spec)?;
    let vol = map.grid.cell_volume();
    Ok((0..map.grid.cell_count())
        .map(|c| vol * spec.residual_density(c, &map.gradient(c)))
        .sum())
}

fn is_violating(pc: &PointConstraint, det: f64) -> bool {
    pc.violation(det) > VIOLATION_TOL * pc.scale()
}

/// Volume of the cells counted as violating.
pub fn violation_volume(map: &PiecewiseAffineMap, spec: &ConstraintSpec) -> Result<f64> {
    check_spec(map, spec)?;
    let vol = map.grid.cell_volume();
    Ok((0..map.grid.cell_count())
        .filter(|&c| is_violating(&spec.at(c), map.gradient(c).determinant()))
        .count() as f64
        * vol)
}

/// Fraction of the domain where `|det ∇v - J| <= tol` (distance to the
/// interval for interval constraints).
pub fn area_within(map: &PiecewiseAffineMap, spec: &ConstraintSpec, tol: f64) -> Result<f64> {
    check_spec(map, spec)?;
    let n = map.grid.cell_count();
    Ok((0..n)
        .filter(|&c| spec.violation(c, &map.gradient(c)) <= tol)
        .count() as f64
        / n as f64)
}

/// Connected regions of violating cells sharing gradient and constraint.
fn violating_regions(
    map: &PiecewiseAffineMap,
    spec: &ConstraintSpec,
    grads: &[Matrix],
) -> Vec<(Vec<usize>, PointConstraint)> {
    let n = map.grid.cell_count();
    let bad: Vec<bool> = (0..n).map(|c| is_violating(&spec.at(c), grads[c].determinant())).collect();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for seed in 0..n {
        if !bad[seed] || seen[seed] {
            continue;
        }
        seen[seed] = true;
        let pc = spec.at(seed);
        let g = grads[seed];
        let mut region = vec![seed];
        let mut head = 0;
        while head < region.len() {
            let c = region[head];
            head += 1;
            for nb in map.grid.cell_neighbors(c) {
                if bad[nb] && !seen[nb] && spec.at(nb) == pc && same_gradient(&grads[nb], &g) {
                    seen[nb] = true;
                    region.push(nb);
                }
            }
        }
        region.sort_unstable();
        out.push((region, pc));
    }
    out
}

/// One refinement: every violating region receives a depth-`depth` laminate
/// towards its constraint, realized with `n_osc` oscillations (fewer when the
/// region is too small).
pub fn refine_once(
    map: &mut PiecewiseAffineMap,
    spec: &ConstraintSpec,
    depth: usize,
    n_osc: f64,
    opts: &IntegratorOpts,
    realizer: &mut Realizer,
) -> Result<StepStats> {
    check_spec(map, spec)?;
    let before = map.gradients();
    let vol = map.grid.cell_volume();
    let residual_before: f64 = before
        .iter()
        .enumerate()
        .map(|(c, a)| vol * spec.residual_density(c, a))
        .sum();
    let regions = violating_regions(map, spec, &before);
    let mut stats = StepStats {
        depth,
        n_osc,
        residual_before,
        regions: regions.len(),
        ..Default::default()
    };

    for (cells, pc) in &regions {
        let root = before[cells[0]];
        let nu = laminate_for_constraint_in(&root, *pc, Depth::Fixed(depth), opts.frame)?;
        if nu.is_dirac() {
            continue;
        }
        let mut n = n_osc;
        loop {
            let rep = realizer.laminate(map, cells, &nu, n, opts.freq_ratio, false)?;
            if rep.depth_realized > 0 || n <= 1.0 {
                stats.skipped += rep.skipped_components;
                stats.skipped_volume += rep.skipped_volume;
                break;
            }
            n = (n / 2.0).max(1.0);
        }
    }

    let p = spec.p();
    for c in 0..map.grid.cell_count() {
        let a = map.gradient(c);
        stats.increment_lp += vol * (a - before[c]).frobenius_norm().powf(p);
        stats.residual += vol * spec.residual_density(c, &a);
        if is_violating(&spec.at(c), a.determinant()) {
            stats.violation_volume += vol;
        }
    }
    Ok(stats)
}

/// Runs up to `iterations` refinements on the schedule of `opts`, stopping
/// early once the residual reaches `target_ratio` times its initial value.
pub fn convex_integrate(
    map0: &PiecewiseAffineMap,
    spec: &ConstraintSpec,
    iterations: usize,
    opts: &IntegratorOpts,
) -> Result<(PiecewiseAffineMap, IterationDiagnostics)> {
    if iterations == 0 {
        return Err(Error::Config("at least one iteration is required".into()));
    }
    opts.validate()?;
    check_spec(map0, spec)?;
    let mut map = map0.clone();
    let initial = residual(&map, spec)?;
    let mut diag = IterationDiagnostics {
        initial_residual: initial,
        initial_violation_volume: violation_volume(&map, spec)?,
        ..Default::default()
    };
    let target = opts.target_ratio * initial;
    if initial <= target || initial == 0.0 {
        diag.converged = true;
        return Ok((map, diag));
    }
    let mut realizer = Realizer::new(&map, opts.realize);
    realizer.measure = false;
    let mut prev = initial;
    for l in 0..iterations {
        let (k, n) = opts.schedule(l);
        let st = refine_once(&mut map, spec, k, n, opts, &mut realizer)?;
        diag.records.push(IterationRecord {
            iteration: l + 1,
            residual: st.residual,
            decay_ratio: if prev > 0.0 { st.residual / prev } else { 0.0 },
            increment_lp: st.increment_lp,
            violation_volume: st.violation_volume,
        });
        prev = st.residual;
        if st.residual <= target {
            diag.converged = true;
            break;
        }
    }
    Ok((map, diag))
}

/// Boundary data for the prescribed-Jacobian problem.
#[derive(Clone)]
pub enum BoundaryData {
    /// Closed form, evaluated at every vertex for the initial extension.
    Global(Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>),
    /// Vertex values; only the boundary ones are used, the interior is
    /// filled by discrete harmonic extension.
    Vertices(Vec<f64>),
}

impl std::fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryData::Global(_) => f.write_str("Global(..)"),
            BoundaryData::Vertices(v) => write!(f, "Vertices({} values)", v.len()),
        }
    }
}

impl BoundaryData {
    pub fn identity() -> Self {
        BoundaryData::Global(Arc::new(|x: &[f64]| x.to_vec()))
    }

    /// `x ↦ A x + c`.
    pub fn affine(a: Matrix, c: Vec<f64>) -> Self {
        BoundaryData::Global(Arc::new(move |x: &[f64]| {
            a.mul_vec(x).iter().zip(&c).map(|(y, s)| y + s).collect()
        }))
    }

    pub fn linear(a: Matrix) -> Self {
        let d = a.dim();
        Self::affine(a, vec![0.0; d])
    }

    /// Initial extension of the data to the whole grid.
    pub fn extend(&self, grid: &SimplicialGrid) -> Result<PiecewiseAffineMap> {
        match self {
            BoundaryData::Global(g) => PiecewiseAffineMap::from_fn(grid.clone(), |x| g(x)),
            BoundaryData::Vertices(values) => {
                if values.len() != grid.vertex_count() * grid.dim() {
                    return Err(Error::Shape(format!(
                        "boundary table has {} entries, grid needs {}",
                        values.len(),
                        grid.vertex_count() * grid.dim()
                    )));
                }
                if values.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("boundary values".into()));
                }
                let mut map = PiecewiseAffineMap {
                    grid: grid.clone(),
                    values: values.clone(),
                };
                map.harmonic_interior();
                Ok(map)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub diagnostics: IterationDiagnostics,
    pub stats: GradientStats,
    /// `Σ vol det ∇u` of the initial extension, which every map with the
    /// same boundary values shares.
    pub reference_det_integral: f64,
    /// Area fraction with `|det ∇v - J| <= 0.05`.
    pub area_within_005: f64,
    pub violation_volume: f64,
}

/// Solves `det ∇v = J` with `v = g` on the boundary vertices.
pub fn solve_prescribed_jacobian(
    grid: &SimplicialGrid,
    g: &BoundaryData,
    j: Field,
    p: f64,
    iterations: usize,
    opts: &IntegratorOpts,
) -> Result<(PiecewiseAffineMap, SolveReport)> {
    let spec = ConstraintSpec::exact(j, p, grid.dim())?;
    solve_constraint(grid, g, &spec, iterations, opts)
}

/// [`solve_prescribed_jacobian`] for an arbitrary constraint; the area
/// fraction uses the distance to the interval for interval constraints.
pub fn solve_constraint(
    grid: &SimplicialGrid,
    g: &BoundaryData,
    spec: &ConstraintSpec,
    iterations: usize,
    opts: &IntegratorOpts,
) -> Result<(PiecewiseAffineMap, SolveReport)> {
    let p = spec.p();
    if spec.dim() != grid.dim() {
        return Err(Error::Shape(format!("constraint is for d = {}, grid has d = {}", spec.dim(), grid.dim())));
    }
    spec.check_cells(grid.cell_count())?;
    let map0 = g.extend(grid)?;
    let reference = map0.gradient_stats(p).pointwise_det_integral;
    let (map, diagnostics) = convex_integrate(&map0, spec, iterations, opts)?;
    let report = SolveReport {
        diagnostics,
        stats: map.gradient_stats(p),
        reference_det_integral: reference,
        area_within_005: area_within(&map, spec, 0.05)?,
        violation_volume: violation_volume(&map, spec)?,
    };
    Ok((map, report))
}

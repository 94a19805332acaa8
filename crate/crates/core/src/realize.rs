//! Realization of rank-one splits and laminates as oscillating
//! piecewise-affine maps with fixed boundary values.
//!
//! A split with directions `a_j ⊗ b_j` on a region adds
//! `Σ a_j |b_j| f_j(x)` at the interior vertices of the region, where
//! `f_j = min(φ_j(b̂_j · x), s · dist(x, ∂region))` and `φ_j` is the
//! nonnegative triangle wave of slope ±1. Away from the cutoff band the
//! gradient is `parent + Σ ±a_j ⊗ b_j`, each sign pattern on the matching
//! fraction of the region. Axis-aligned normals get periods that are even
//! numbers of cells, so their kinks lie on lattice planes and no cell
//! straddles one.

use std::collections::{BinaryHeap, HashMap};
use std::cmp::Reverse;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::laminate::{DiscreteLaminate, SplitStep};
use crate::matrix::Matrix;
use crate::pamap::PiecewiseAffineMap;

/// Relative tolerance for "this cell carries that gradient".
pub const MATCH_TOL: f64 = 1e-9;

pub fn same_gradient(a: &Matrix, b: &Matrix) -> bool {
    a.max_abs_diff(b) <= MATCH_TOL * (1.0 + b.frobenius_norm())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RealizeOpts {
    /// Slope `s` of the cutoff `s · dist`. With `s = 2` the cutoff band
    /// gradients stay within `|parent| + 2 |a_j ⊗ b_j|` of the parent.
    pub cutoff_slope: f64,
}

impl Default for RealizeOpts {
    fn default() -> Self {
        RealizeOpts { cutoff_slope: 2.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Spacing {
    /// Oscillations across the region's extent along each normal.
    Count(f64),
    /// Absolute period.
    Period(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitReport {
    /// Volume fraction of the region carrying each child, in child order.
    pub fractions: Vec<f64>,
    /// Fraction of the region carrying none of the children.
    pub interface_fraction: f64,
    /// `interface_fraction · N`, the measured constant `c_d`.
    pub c_d: f64,
    /// Period used along each direction.
    pub periods: Vec<f64>,
    pub region_volume: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LaminateReport {
    pub tv_discrepancy: f64,
    pub interface_volume: f64,
    pub region_volume: f64,
    /// Deepest tree level realized on at least one component.
    pub depth_realized: usize,
    /// Components left unsplit because the resolution ran out.
    pub skipped_components: usize,
    pub skipped_volume: f64,
}

/// Per-grid scratch shared by successive realizations on one map.
pub struct Realizer {
    valence: Vec<u16>,
    stamp: Vec<u32>,
    epoch: u32,
    pub opts: RealizeOpts,
    /// Compute the total-variation discrepancy after each laminate.
    pub measure: bool,
}

struct Directed {
    amp: Vec<f64>,
    unit: Vec<f64>,
    axis: Option<(usize, f64)>,
}

impl Realizer {
    pub fn new(map: &PiecewiseAffineMap, opts: RealizeOpts) -> Self {
        Realizer {
            valence: map.grid.vertex_valence(),
            stamp: vec![0; map.grid.cell_count()],
            epoch: 0,
            opts,
            measure: true,
        }
    }

    fn next_epoch(&mut self) -> u32 {
        self.epoch += 1;
        if self.epoch == u32::MAX {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        self.epoch
    }

    /// Connected components (through shared facets) of `cells`.
    pub fn components(&mut self, map: &PiecewiseAffineMap, cells: &[usize]) -> Vec<Vec<usize>> {
        let mark = self.next_epoch();
        for &c in cells {
            self.stamp[c] = mark;
        }
        let seen = self.next_epoch();
        let mut out = Vec::new();
        for &c in cells {
            if self.stamp[c] == seen {
                continue;
            }
            self.stamp[c] = seen;
            let mut comp = vec![c];
            let mut head = 0;
            while head < comp.len() {
                let x = comp[head];
                head += 1;
                for nb in map.grid.cell_neighbors(x) {
                    if self.stamp[nb] == mark {
                        self.stamp[nb] = seen;
                        comp.push(nb);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Region vertices and whether each is interior (all incident cells in
    /// the region, not on the domain boundary).
    fn region_vertices(&self, map: &PiecewiseAffineMap, cells: &[usize]) -> (Vec<usize>, Vec<bool>) {
        let mut count: HashMap<usize, u16> = HashMap::new();
        for &c in cells {
            for v in map.grid.cell_vertices(c) {
                *count.entry(v).or_insert(0) += 1;
            }
        }
        let mut verts: Vec<usize> = count.keys().copied().collect();
        verts.sort_unstable();
        let interior = verts
            .iter()
            .map(|v| count[v] == self.valence[*v] && !map.grid.is_boundary_vertex(*v))
            .collect();
        (verts, interior)
    }

    /// Lattice-path distance from each region vertex to the nearest
    /// non-interior region vertex.
    fn boundary_distance(map: &PiecewiseAffineMap, verts: &[usize], interior: &[bool]) -> Vec<f64> {
        let h = map.grid.spacing();
        let pos: HashMap<usize, usize> = verts.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let mut dist = vec![f64::INFINITY; verts.len()];
        let mut heap = BinaryHeap::new();
        for (i, inner) in interior.iter().enumerate() {
            if !inner {
                dist[i] = 0.0;
                heap.push(Reverse((Ordered(0.0), i)));
            }
        }
        while let Some(Reverse((Ordered(dv), i))) = heap.pop() {
            if dv > dist[i] {
                continue;
            }
            for (nb, axis) in map.grid.vertex_neighbors(verts[i]) {
                if let Some(&j) = pos.get(&nb) {
                    let nd = dv + h[axis];
                    if nd < dist[j] {
                        dist[j] = nd;
                        heap.push(Reverse((Ordered(nd), j)));
                    }
                }
            }
        }
        dist
    }

    fn check_region(map: &PiecewiseAffineMap, cells: &[usize], parent: &Matrix) -> Result<()> {
        if cells.is_empty() {
            return Err(Error::Precondition("empty region".into()));
        }
        if parent.dim() != map.dim() {
            return Err(Error::Shape("split and map dimensions differ".into()));
        }
        for &c in cells {
            if c >= map.grid.cell_count() {
                return Err(Error::Precondition(format!("cell {c} is not in the grid")));
            }
            let g = map.gradient(c);
            if !same_gradient(&g, parent) {
                return Err(Error::Precondition(format!(
                    "gradient on cell {c} differs from the split parent by {:e}",
                    g.max_abs_diff(parent)
                )));
            }
        }
        Ok(())
    }

    /// Realizes one split on `cells`; `level` only labels errors.
    pub fn split(
        &mut self,
        map: &mut PiecewiseAffineMap,
        cells: &[usize],
        step: &SplitStep,
        spacing: Spacing,
        level: usize,
    ) -> Result<SplitReport> {
        Self::check_region(map, cells, &step.parent)?;
        let h = map.grid.spacing().to_vec();
        let volume = cells.len() as f64 * map.grid.cell_volume();
        let dirs: Vec<Directed> = step
            .directions
            .iter()
            .map(|r| {
                let nb = r.b.iter().map(|x| x * x).sum::<f64>().sqrt();
                let unit: Vec<f64> = r.b.iter().map(|x| x / nb).collect();
                let axis = unit
                    .iter()
                    .position(|x| (x.abs() - 1.0).abs() < 1e-12)
                    .filter(|&k| unit.iter().enumerate().all(|(i, x)| i == k || x.abs() < 1e-12))
                    .map(|k| (k, unit[k].signum()));
                Directed {
                    amp: r.a.iter().map(|x| x * nb).collect(),
                    unit,
                    axis,
                }
            })
            .collect();

        if dirs.iter().all(|dr| dr.amp.iter().all(|x| *x == 0.0)) {
            let mut fractions = vec![0.0; step.children.len()];
            fractions[0] = 1.0;
            return Ok(SplitReport {
                fractions,
                interface_fraction: 0.0,
                c_d: 0.0,
                periods: vec![0.0; dirs.len()],
                region_volume: volume,
            });
        }

        let (verts, interior) = self.region_vertices(map, cells);
        let lattice: Vec<Vec<usize>> = verts.iter().map(|v| map.grid.vertex_lattice(*v)).collect();
        let coords: Vec<Vec<f64>> = verts.iter().map(|v| map.grid.vertex_coord(*v)).collect();

        let mut fields: Vec<Vec<f64>> = Vec::with_capacity(dirs.len());
        let mut periods = Vec::with_capacity(dirs.len());
        for dr in &dirs {
            let field = match dr.axis {
                Some((k, sgn)) => {
                    let idx: Vec<i64> = lattice.iter().map(|l| sgn as i64 * l[k] as i64).collect();
                    let lo = *idx.iter().min().unwrap();
                    let hi = *idx.iter().max().unwrap();
                    let cells_per_period = match spacing {
                        Spacing::Count(n) => (hi - lo) as f64 / n,
                        Spacing::Period(t) => t / h[k],
                    };
                    if cells_per_period < 2.0 - 1e-9 {
                        return Err(Error::ResolutionExhausted {
                            depth: level,
                            detail: format!(
                                "period of {cells_per_period:.3} cells along axis {k} (need at least 2)"
                            ),
                        });
                    }
                    let tc = 2 * ((cells_per_period / 2.0).round() as i64).max(1);
                    periods.push(tc as f64 * h[k]);
                    idx.iter()
                        .map(|&i| {
                            let u = (i - lo).rem_euclid(tc);
                            u.min(tc - u) as f64 * h[k]
                        })
                        .collect::<Vec<f64>>()
                }
                None => {
                    let proj: Vec<f64> = coords.iter().map(|x| x.iter().zip(&dr.unit).map(|(a, b)| a * b).sum()).collect();
                    let lo = proj.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = proj.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let t = match spacing {
                        Spacing::Count(n) => (hi - lo) / n,
                        Spacing::Period(t) => t,
                    };
                    let hmax = h.iter().cloned().fold(0.0, f64::max);
                    if t < 2.0 * hmax * (1.0 - 1e-9) {
                        return Err(Error::ResolutionExhausted {
                            depth: level,
                            detail: format!("period {t:.3e} is below two cells ({:.3e})", 2.0 * hmax),
                        });
                    }
                    periods.push(t);
                    proj.iter()
                        .map(|p| {
                            let u = (p - lo).rem_euclid(t);
                            u.min(t - u)
                        })
                        .collect()
                }
            };
            fields.push(field);
        }

        let dist = Self::boundary_distance(map, &verts, &interior);
        let s = self.opts.cutoff_slope;
        for (i, &v) in verts.iter().enumerate() {
            if !interior[i] {
                continue;
            }
            let cut = s * dist[i];
            let val = map.value_mut(v);
            for (dr, field) in dirs.iter().zip(&fields) {
                let f = field[i].min(cut);
                for (x, a) in val.iter_mut().zip(&dr.amp) {
                    *x += a * f;
                }
            }
        }

        let mut vols = vec![0.0; step.children.len()];
        let mut other = 0.0;
        let cv = map.grid.cell_volume();
        for &c in cells {
            let g = map.gradient(c);
            match step.children.iter().position(|ch| same_gradient(&g, &ch.matrix)) {
                Some(k) => vols[k] += cv,
                None => other += cv,
            }
        }
        let n_eff = match spacing {
            Spacing::Count(n) => n,
            Spacing::Period(_) => 0.0,
        };
        Ok(SplitReport {
            fractions: vols.iter().map(|x| x / volume).collect(),
            interface_fraction: other / volume,
            c_d: other / volume * n_eff,
            periods,
            region_volume: volume,
        })
    }

    /// Applies the split tree of `nu` level by level. Each level's period is
    /// the root period divided by `freq_ratio^level`. With `strict`, a level
    /// that cannot be resolved aborts with [`Error::ResolutionExhausted`];
    /// otherwise that component is left as it is.
    pub fn laminate(
        &mut self,
        map: &mut PiecewiseAffineMap,
        cells: &[usize],
        nu: &DiscreteLaminate,
        n_osc: f64,
        freq_ratio: f64,
        strict: bool,
    ) -> Result<LaminateReport> {
        Self::check_region(map, cells, &nu.root)?;
        let cv = map.grid.cell_volume();
        let region_volume = cells.len() as f64 * cv;
        let mut report = LaminateReport {
            region_volume,
            ..Default::default()
        };
        if nu.is_dirac() || nu.tree.is_empty() {
            return Ok(report);
        }
        if !(freq_ratio >= 1.0) {
            return Err(Error::Config(format!("freq_ratio must be at least 1, got {freq_ratio}")));
        }

        // (tree step, component, depth)
        let mut queue: Vec<(usize, Vec<usize>, usize)> = vec![(0, cells.to_vec(), 0)];
        let mut base_period: Option<f64> = None;
        let mut head = 0;
        while head < queue.len() {
            let (sid, comp, depth) = std::mem::take(&mut queue[head]);
            head += 1;
            let step = &nu.tree[sid];
            let spacing = match base_period {
                None => Spacing::Count(n_osc),
                Some(t) => Spacing::Period(t / freq_ratio.powi(depth as i32)),
            };
            let split = match self.split(map, &comp, step, spacing, depth) {
                Ok(r) => r,
                Err(Error::ResolutionExhausted { .. }) if !strict => {
                    report.skipped_components += 1;
                    report.skipped_volume += comp.len() as f64 * cv;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if base_period.is_none() {
                base_period = split.periods.iter().cloned().reduce(f64::min);
            }
            report.depth_realized = report.depth_realized.max(depth + 1);
            for ch in &step.children {
                let Some(next) = ch.next else { continue };
                let carrying: Vec<usize> = comp
                    .iter()
                    .copied()
                    .filter(|&c| same_gradient(&map.gradient(c), &ch.matrix))
                    .collect();
                for sub in self.components(map, &carrying) {
                    queue.push((next, sub, depth + 1));
                }
            }
        }

        if self.measure {
            let (tv, interface) = tv_discrepancy(map, cells, nu);
            report.tv_discrepancy = tv;
            report.interface_volume = interface;
        }
        Ok(report)
    }
}

/// Total-variation distance between the volume-weighted gradient
/// distribution on `cells` and the atoms of `nu`, plus the volume carrying
/// no atom.
pub fn tv_discrepancy(map: &PiecewiseAffineMap, cells: &[usize], nu: &DiscreteLaminate) -> (f64, f64) {
    let mut atoms: Vec<(Matrix, f64)> = Vec::new();
    for a in &nu.atoms {
        match atoms.iter_mut().find(|(m, _)| same_gradient(&a.matrix, m)) {
            Some(slot) => slot.1 += a.weight.to_f64(),
            None => atoms.push((a.matrix, a.weight.to_f64())),
        }
    }
    let cv = map.grid.cell_volume();
    let total = cells.len() as f64 * cv;
    let mut vols = vec![0.0; atoms.len()];
    let mut other = 0.0;
    for &c in cells {
        let g = map.gradient(c);
        match atoms.iter().position(|(m, _)| same_gradient(&g, m)) {
            Some(k) => vols[k] += cv,
            None => other += cv,
        }
    }
    let mut tv = other / total;
    for ((_, w), v) in atoms.iter().zip(&vols) {
        tv += (v / total - w).abs();
    }
    (0.5 * tv, other)
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
struct Ordered(f64);

impl Eq for Ordered {}

impl Ord for Ordered {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Realizes `step` on `region` with `n_osc` oscillations across it.
pub fn realize_split(
    map: &mut PiecewiseAffineMap,
    region: &[usize],
    step: &SplitStep,
    n_osc: usize,
    opts: RealizeOpts,
) -> Result<SplitReport> {
    if n_osc < 2 {
        return Err(Error::Config(format!("N must be at least 2, got {n_osc}")));
    }
    Realizer::new(map, opts).split(map, region, step, Spacing::Count(n_osc as f64), 0)
}

/// Realizes the whole split tree of `nu` on `region`.
pub fn realize_laminate(
    map: &mut PiecewiseAffineMap,
    region: &[usize],
    nu: &DiscreteLaminate,
    n_osc: usize,
    freq_ratio: usize,
    opts: RealizeOpts,
) -> Result<LaminateReport> {
    if n_osc < 2 {
        return Err(Error::Config(format!("N must be at least 2, got {n_osc}")));
    }
    Realizer::new(map, opts).laminate(map, region, nu, n_osc as f64, freq_ratio as f64, true)
}

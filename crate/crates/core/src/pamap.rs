//! Continuous piecewise-affine maps on Kuhn grids.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{kuhn_grid, GridBox, SimplicialGrid, MAX_GRID_DIM};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseAffineMap {
    pub grid: SimplicialGrid,
    /// Vertex values, `d` consecutive entries per vertex.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetHistogram {
    pub edges: Vec<f64>,
    /// Volume per bin; determinants outside the edges land in the end bins.
    pub volumes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientStats {
    /// `(Σ vol ‖∇v‖^p)^{1/p}`.
    pub lp_norm: f64,
    pub det_histogram: DetHistogram,
    /// `Σ vol det ∇v`.
    pub pointwise_det_integral: f64,
}

#[derive(Serialize, Deserialize)]
struct MapRepr {
    dim: usize,
    n: usize,
    #[serde(rename = "box")]
    bbox: GridBox,
    values: Vec<Vec<f64>>,
}

impl PiecewiseAffineMap {
    pub fn from_fn(grid: SimplicialGrid, g: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let d = grid.dim();
        let mut values = Vec::with_capacity(grid.vertex_count() * d);
        for v in 0..grid.vertex_count() {
            let y = g(&grid.vertex_coord(v));
            if y.len() != d {
                return Err(Error::Shape(format!("map value has {} entries, expected {d}", y.len())));
            }
            if y.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("map value at vertex {v}")));
            }
            values.extend(y);
        }
        Ok(PiecewiseAffineMap { grid, values })
    }

    pub fn identity(grid: SimplicialGrid) -> Self {
        Self::from_fn(grid, |x| x.to_vec()).expect("identity is finite")
    }

    /// `x ↦ A x`.
    pub fn linear(grid: SimplicialGrid, a: &Matrix) -> Result<Self> {
        if a.dim() != grid.dim() {
            return Err(Error::Shape("matrix and grid dimensions differ".into()));
        }
        Self::from_fn(grid, |x| a.mul_vec(x))
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn value(&self, v: usize) -> &[f64] {
        let d = self.dim();
        &self.values[v * d..(v + 1) * d]
    }

    pub fn value_mut(&mut self, v: usize) -> &mut [f64] {
        let d = self.dim();
        &mut self.values[v * d..(v + 1) * d]
    }

    /// Constant gradient on `cell`: column `π(m)` is the difference quotient
    /// along the `m`-th Kuhn edge.
    pub fn gradient(&self, cell: usize) -> Matrix {
        let g = &self.grid;
        let d = g.dim();
        let verts = g.cell_vertices(cell);
        let perm = g.perm(cell);
        let h = g.spacing();
        let mut a = Matrix::zeros_unchecked(d);
        for (m, &axis) in perm.iter().enumerate() {
            let (u0, u1) = (self.value(verts[m]), self.value(verts[m + 1]));
            for i in 0..d {
                a[(i, axis)] = (u1[i] - u0[i]) / h[axis];
            }
        }
        a
    }

    pub fn gradients(&self) -> Vec<Matrix> {
        (0..self.grid.cell_count()).map(|c| self.gradient(c)).collect()
    }

    /// Largest `|u(x_m) - u(x_0) - ∇u (x_m - x_0)|` over all cells.
    pub fn conformity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for c in 0..self.grid.cell_count() {
            let a = self.gradient(c);
            let verts = self.grid.cell_vertices(c);
            let x0 = self.grid.vertex_coord(verts[0]);
            for v in &verts[1..] {
                let dx: Vec<f64> = self.grid.vertex_coord(*v).iter().zip(&x0).map(|(a, b)| a - b).collect();
                let pred = a.mul_vec(&dx);
                for i in 0..d {
                    let du = self.value(*v)[i] - self.value(verts[0])[i];
                    worst = worst.max((du - pred[i]).abs());
                }
            }
        }
        worst
    }

    pub fn gradient_stats(&self, p: f64) -> GradientStats {
        let grads = self.gradients();
        let dets: Vec<f64> = grads.iter().map(Matrix::determinant).collect();
        let lo = dets.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = dets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi - lo < 1e-12 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
        let bins = 40;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
        self.gradient_stats_with(p, &grads, &dets, edges)
    }

    fn gradient_stats_with(&self, p: f64, grads: &[Matrix], dets: &[f64], edges: Vec<f64>) -> GradientStats {
        let vol = self.grid.cell_volume();
        let bins = edges.len() - 1;
        let mut volumes = vec![0.0; bins];
        let mut lp = 0.0;
        let mut integral = 0.0;
        for (a, &det) in grads.iter().zip(dets) {
            lp += vol * a.frobenius_norm().powf(p);
            integral += vol * det;
            let pos = edges.partition_point(|&e| e <= det);
            volumes[pos.clamp(1, bins) - 1] += vol;
        }
        GradientStats {
            lp_norm: lp.powf(1.0 / p),
            det_histogram: DetHistogram { edges, volumes },
            pointwise_det_integral: integral,
        }
    }

    /// Replaces interior values by the discrete harmonic extension of the
    /// boundary values (SOR on the lattice Laplacian).
    pub fn harmonic_interior(&mut self) {
        let g = self.grid.clone();
        let d = g.dim();
        let n = g.n() as f64;
        let omega = 2.0 / (1.0 + (std::f64::consts::PI / n).sin());
        let w: Vec<f64> = g.spacing().iter().map(|h| 1.0 / (h * h)).collect();
        let interior: Vec<usize> = (0..g.vertex_count()).filter(|&v| !g.is_boundary_vertex(v)).collect();
        let strides: Vec<usize> = (0..d).map(|k| g.vertex_stride(k)).collect();
        let wsum: f64 = 2.0 * w.iter().sum::<f64>();
        for _ in 0..20 * g.n() + 100 {
            let mut change = 0.0f64;
            for &v in &interior {
                for i in 0..d {
                    let mut acc = 0.0;
                    for k in 0..d {
                        acc += w[k] * (self.values[(v + strides[k]) * d + i] + self.values[(v - strides[k]) * d + i]);
                    }
                    let old = self.values[v * d + i];
                    let new = old + omega * (acc / wsum - old);
                    change = change.max((new - old).abs());
                    self.values[v * d + i] = new;
                }
            }
            if change < 1e-14 {
                break;
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let d = self.dim();
        let repr = MapRepr {
            dim: d,
            n: self.grid.n(),
            bbox: self.grid.bbox().clone(),
            values: self.values.chunks(d).map(<[f64]>::to_vec).collect(),
        };
        Ok(serde_json::to_string(&repr)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let repr: MapRepr = serde_json::from_str(s)?;
        let grid = kuhn_grid(repr.dim, repr.n, repr.bbox, repr.dim == MAX_GRID_DIM)?;
        if repr.values.len() != grid.vertex_count() || repr.values.iter().any(|v| v.len() != repr.dim) {
            return Err(Error::Shape("vertex value table does not match the grid".into()));
        }
        let values: Vec<f64> = repr.values.into_iter().flatten().collect();
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("map values".into()));
        }
        Ok(PiecewiseAffineMap { grid, values })
    }

    /// One row per cell: `cell_id, a00, a01, .., det, volume`.
    pub fn write_gradient_csv(&self, out: &mut impl Write, config_hash: Option<&str>) -> Result<()> {
        let d = self.dim();
        let mut header: Vec<String> = Vec::new();
        if config_hash.is_some() {
            header.push("config_hash".into());
        }
        header.push("cell_id".into());
        for i in 0..d {
            for j in 0..d {
                header.push(format!("a{i}{j}"));
            }
        }
        header.push("det".into());
        header.push("volume".into());
        writeln!(out, "{}", header.join(","))?;
        let vol = self.grid.cell_volume();
        for c in 0..self.grid.cell_count() {
            let a = self.gradient(c);
            let mut row: Vec<String> = Vec::with_capacity(d * d + 4);
            if let Some(h) = config_hash {
                row.push(h.to_string());
            }
            row.push(c.to_string());
            row.extend(a.as_slice().iter().map(|x| x.to_string()));
            row.push(a.determinant().to_string());
            row.push(vol.to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_map_gradients_are_constant() {
        let grid = SimplicialGrid::unit(3, 3).unwrap();
        let a = Matrix::from_rows(&[&[1.0, 2.0, 0.0], &[0.5, -1.0, 3.0], &[0.0, 1.0, 1.5]]).unwrap();
        let map = PiecewiseAffineMap::linear(grid, &a).unwrap();
        for c in 0..map.grid.cell_count() {
            assert!(map.gradient(c).max_abs_diff(&a) < 1e-12);
        }
        assert!(map.conformity_error() < 1e-12);
        let st = map.gradient_stats(1.5);
        assert!((st.lp_norm - a.frobenius_norm()).abs() < 1e-12);
        assert!((st.pointwise_det_integral - a.determinant()).abs() < 1e-12);
        assert!((st.det_histogram.volumes.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_det_integral() {
        let map = PiecewiseAffineMap::identity(SimplicialGrid::unit(2, 8).unwrap());
        assert!((map.gradient_stats(1.5).pointwise_det_integral - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lp_norm_scales_with_box_volume() {
        let grid = kuhn_grid(2, 4, GridBox { lo: vec![0.0, 0.0], hi: vec![2.0, 2.0] }, false).unwrap();
        let a = Matrix::diag(&[2.0, 1.0]).unwrap();
        let map = PiecewiseAffineMap::linear(grid, &a).unwrap();
        let st = map.gradient_stats(2.0);
        assert!((st.lp_norm - a.frobenius_norm() * 4f64.sqrt()).abs() < 1e-12);
        assert!((st.pointwise_det_integral - 8.0).abs() < 1e-12);
    }

    #[test]
    fn null_lagrangian_on_random_interior() {
        use rand::{Rng, SeedableRng};
        let grid = SimplicialGrid::unit(2, 10).unwrap();
        let mut map = PiecewiseAffineMap::identity(grid);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for v in 0..map.grid.vertex_count() {
            if !map.grid.is_boundary_vertex(v) {
                for x in map.value_mut(v) {
                    *x += rng.gen_range(-0.3..0.3);
                }
            }
        }
        assert!((map.gradient_stats(1.5).pointwise_det_integral - 1.0).abs() < 1e-12);
    }

    #[test]
    fn harmonic_extension_reproduces_affine_data() {
        let grid = SimplicialGrid::unit(2, 16).unwrap();
        let a = Matrix::from_rows(&[&[2.0, 1.0], &[0.0, 1.0]]).unwrap();
        let exact = PiecewiseAffineMap::linear(grid, &a).unwrap();
        let mut map = exact.clone();
        for v in 0..map.grid.vertex_count() {
            if !map.grid.is_boundary_vertex(v) {
                map.value_mut(v).iter_mut().for_each(|x| *x = 0.0);
            }
        }
        map.harmonic_interior();
        let err = map.values.iter().zip(&exact.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn json_and_csv() {
        let grid = SimplicialGrid::unit(2, 2).unwrap();
        let map = PiecewiseAffineMap::linear(grid, &Matrix::diag(&[2.0, 0.5]).unwrap()).unwrap();
        let json = map.to_json().unwrap();
        assert!(json.contains("\"box\""));
        assert_eq!(PiecewiseAffineMap::from_json(&json).unwrap(), map);

        let mut buf = Vec::new();
        map.write_gradient_csv(&mut buf, Some("abc")).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "config_hash,cell_id,a00,a01,a10,a11,det,volume");
        assert_eq!(lines.len(), 1 + 8);
        assert!(lines[1].starts_with("abc,0,2,0,0,0.5,1,"));
    }
}

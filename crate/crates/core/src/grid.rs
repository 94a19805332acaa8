//! Kuhn-triangulated lattice grids on boxes.
//!
//! Vertex `(i_0, .., i_{d-1})` has index `Σ i_k (n+1)^k`. Cube `c` is split
//! into `d!` simplices, one per permutation `π`, with vertices
//! `x_0 = c, x_m = x_{m-1} + e_{π(m)}`; cell id is `cube · d! + perm`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_GRID_DIM: usize = 4;
/// Cell-count guard (about 64 MiB of vertex data in the worst case).
pub const MAX_CELLS: usize = 1 << 23;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl GridBox {
    pub fn unit(d: usize) -> Self {
        GridBox {
            lo: vec![0.0; d],
            hi: vec![1.0; d],
        }
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimplicialGrid {
    dim: usize,
    n: usize,
    bbox: GridBox,
    h: Vec<f64>,
    perms: Vec<Vec<usize>>,
    strides: Vec<usize>,
}

fn permutations(d: usize) -> Vec<Vec<usize>> {
    if d == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(d - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, d - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Kuhn grid with `n` subdivisions per axis. `allow_4d` unlocks `d = 4`.
pub fn kuhn_grid(d: usize, n: usize, bbox: GridBox, allow_4d: bool) -> Result<SimplicialGrid> {
    if !(2..=MAX_GRID_DIM).contains(&d) || (d == 4 && !allow_4d) {
        return Err(Error::Grid(format!(
            "grids are supported for d in 2..=3 (4 with the explicit flag), got {d}"
        )));
    }
    if n == 0 {
        return Err(Error::Grid("n must be at least 1".into()));
    }
    if bbox.lo.len() != d || bbox.hi.len() != d {
        return Err(Error::Grid(format!("box must have {d} coordinates per corner")));
    }
    if bbox.lo.iter().zip(&bbox.hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && h > l)) {
        return Err(Error::Grid("box corners must be finite with lo < hi".into()));
    }
    let cells = (1..=d).product::<usize>() as u128 * (n as u128).pow(d as u32);
    if cells > MAX_CELLS as u128 {
        return Err(Error::Grid(format!("{cells} cells exceeds the limit {MAX_CELLS}")));
    }
    let h = bbox.lo.iter().zip(&bbox.hi).map(|(l, hi)| (hi - l) / n as f64).collect();
    let strides = (0..d).map(|k| (n + 1).pow(k as u32)).collect();
    Ok(SimplicialGrid {
        dim: d,
        n,
        bbox,
        h,
        perms: permutations(d),
        strides,
    })
}

impl SimplicialGrid {
    pub fn unit(d: usize, n: usize) -> Result<Self> {
        kuhn_grid(d, n, GridBox::unit(d), false)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bbox(&self) -> &GridBox {
        &self.bbox
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    pub fn vertex_count(&self) -> usize {
        (self.n + 1).pow(self.dim as u32)
    }

    pub fn cube_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn perms_per_cube(&self) -> usize {
        self.perms.len()
    }

    pub fn cell_count(&self) -> usize {
        self.cube_count() * self.perms.len()
    }

    pub fn perm(&self, cell: usize) -> &[usize] {
        &self.perms[cell % self.perms.len()]
    }

    pub fn vertex_stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn vertex_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn vertex_lattice(&self, v: usize) -> Vec<usize> {
        (0..self.dim).map(|k| (v / self.strides[k]) % (self.n + 1)).collect()
    }

    pub fn vertex_coord(&self, v: usize) -> Vec<f64> {
        self.vertex_lattice(v)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.coord(k, i))
            .collect()
    }

    /// Coordinate of lattice index `i` on `axis`; the last index hits `hi`
    /// exactly.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i == self.n {
            self.bbox.hi[axis]
        } else {
            self.bbox.lo[axis] + i as f64 * self.h[axis]
        }
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.vertex_lattice(v).iter().any(|&i| i == 0 || i == self.n)
    }

    pub fn boundary_flags(&self) -> Vec<bool> {
        (0..self.vertex_count()).map(|v| self.is_boundary_vertex(v)).collect()
    }

    pub fn cube_lattice(&self, cube: usize) -> Vec<usize> {
        (0..self.dim).map(|k| (cube / self.n.pow(k as u32)) % self.n).collect()
    }

    fn cube_index(&self, idx: &[usize]) -> usize {
        idx.iter().rev().fold(0, |acc, &i| acc * self.n + i)
    }

    /// The `d + 1` vertices of `cell` along its Kuhn path.
    pub fn cell_vertices(&self, cell: usize) -> Vec<usize> {
        let cube = cell / self.perms.len();
        let perm = self.perm(cell);
        let mut v = self.vertex_index(&self.cube_lattice(cube));
        let mut out = Vec::with_capacity(self.dim + 1);
        out.push(v);
        for &axis in perm {
            v += self.strides[axis];
            out.push(v);
        }
        out
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product::<f64>() / self.perms.len() as f64
    }

    pub fn total_volume(&self) -> f64 {
        self.cell_volume() * self.cell_count() as f64
    }

    pub fn cell_centroid(&self, cell: usize) -> Vec<f64> {
        let verts = self.cell_vertices(cell);
        let mut c = vec![0.0; self.dim];
        for v in &verts {
            for (ck, xk) in c.iter_mut().zip(self.vertex_coord(*v)) {
                *ck += xk;
            }
        }
        c.iter_mut().for_each(|x| *x /= verts.len() as f64);
        c
    }

    /// Cells sharing a facet with `cell` (at most `d + 1`).
    pub fn cell_neighbors(&self, cell: usize) -> Vec<usize> {
        let d = self.dim;
        let np = self.perms.len();
        let cube = self.cube_lattice(cell / np);
        let perm = self.perm(cell).to_vec();
        let mut out = Vec::with_capacity(d + 1);
        let perm_id = |p: &[usize]| self.perms.binary_search_by(|q| q.as_slice().cmp(p)).unwrap();

        // facet opposite x_0 lies in the cube shifted along π(1)
        let first = perm[0];
        if cube[first] + 1 < self.n {
            let mut c = cube.clone();
            c[first] += 1;
            let mut p = perm[1..].to_vec();
            p.push(first);
            out.push(self.cube_index(&c) * np + perm_id(&p));
        }
        for m in 1..d {
            let mut p = perm.clone();
            p.swap(m - 1, m);
            out.push(self.cube_index(&cube) * np + perm_id(&p));
        }
        let last = perm[d - 1];
        if cube[last] > 0 {
            let mut c = cube;
            c[last] -= 1;
            let mut p = vec![last];
            p.extend_from_slice(&perm[..d - 1]);
            out.push(self.cube_index(&c) * np + perm_id(&p));
        }
        out
    }

    /// Number of cells incident to each vertex.
    pub fn vertex_valence(&self) -> Vec<u16> {
        let mut val = vec![0u16; self.vertex_count()];
        for c in 0..self.cell_count() {
            for v in self.cell_vertices(c) {
                val[v] += 1;
            }
        }
        val
    }

    /// Lattice neighbors `v ± e_k` of `v`.
    pub fn vertex_neighbors(&self, v: usize) -> Vec<(usize, usize)> {
        let idx = self.vertex_lattice(v);
        let mut out = Vec::with_capacity(2 * self.dim);
        for k in 0..self.dim {
            if idx[k] > 0 {
                out.push((v - self.strides[k], k));
            }
            if idx[k] < self.n {
                out.push((v + self.strides[k], k));
            }
        }
        out
    }
}

//! Independent oracles shared by the integration suites. Nothing here calls
//! the library's own determinant or gradient code.
#![allow(dead_code)]

use lamforge::grid::SimplicialGrid;
use lamforge::pamap::PiecewiseAffineMap;
use lamforge::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_entries(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..d * d).map(|_| rng.gen_range(lo..=hi)).collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::new(d, &random_entries(rng, d, lo, hi)).unwrap()
}

/// Laplace expansion along the first row of the row-major `d × d` block.
pub fn laplace_det(a: &[f64], d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => a[0],
        _ => {
            let mut total = 0.0;
            let mut sub = Vec::with_capacity((d - 1) * (d - 1));
            for j in 0..d {
                if a[j] == 0.0 {
                    continue;
                }
                sub.clear();
                for i in 1..d {
                    for k in 0..d {
                        if k != j {
                            sub.push(a[i * d + k]);
                        }
                    }
                }
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                total += sign * a[j] * laplace_det(&sub, d - 1);
            }
            total
        }
    }
}

pub fn brute_minor(m: &Matrix, rows: &[usize], cols: &[usize]) -> f64 {
    let d = m.dim();
    let a = m.as_slice();
    let sub: Vec<f64> = rows.iter().flat_map(|&i| cols.iter().map(move |&j| a[i * d + j])).collect();
    laplace_det(&sub, rows.len())
}

/// All `k`-subsets of `0..d` in lexicographic order.
pub fn subsets(d: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << d)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..d).filter(|i| m >> i & 1 == 1).collect::<Vec<_>>())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Identity plus a seeded perturbation of the interior vertices.
pub fn perturbed_map(d: usize, n: usize, amp: f64, seed: u64) -> PiecewiseAffineMap {
    let grid = SimplicialGrid::unit(d, n).unwrap();
    let mut map = PiecewiseAffineMap::identity(grid.clone());
    let mut r = rng(seed);
    for v in 0..grid.vertex_count() {
        if !grid.is_boundary_vertex(v) {
            for x in map.value_mut(v) {
                *x += amp * r.gen_range(-1.0..=1.0);
            }
        }
    }
    map
}

/// `det ∇u` on a cell from the vertex data: `det U / det X` with `U`, `X`
/// the edge vectors from the first vertex.
pub fn cell_det(map: &PiecewiseAffineMap, cell: usize) -> f64 {
    let d = map.dim();
    let vs = map.grid.cell_vertices(cell);
    let x0 = map.grid.vertex_coord(vs[0]);
    let u0 = map.value(vs[0]).to_vec();
    let mut u = vec![0.0; d * d];
    let mut x = vec![0.0; d * d];
    for (j, &v) in vs[1..].iter().enumerate() {
        let xv = map.grid.vertex_coord(v);
        let uv = map.value(v);
        for i in 0..d {
            u[i * d + j] = uv[i] - u0[i];
            x[i * d + j] = xv[i] - x0[i];
        }
    }
    laplace_det(&u, d) / laplace_det(&x, d)
}

/// `Σ_cells |Ω|/#cells · |det ∇u − r|^{p/d}`.
pub fn independent_residual(map: &PiecewiseAffineMap, r: f64, p: f64) -> f64 {
    let d = map.dim();
    let cells = map.grid.cell_count();
    let vol = 1.0 / cells as f64;
    let mut terms: Vec<f64> = (0..cells).map(|c| vol * (cell_det(map, c) - r).abs().powf(p / d as f64)).collect();
    terms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    terms.iter().sum()
}

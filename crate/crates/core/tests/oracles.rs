//! Library results against independent computations.

mod common;

use common::*;
use lamforge::checks::{barycenter, minors_consistency, moment_p};
use lamforge::experiments::{EnergyDensity, Kappa};
use lamforge::integrator::residual;
use lamforge::{build_laminate, ConstraintSpec, Depth, Matrix};

#[test]
fn determinant_matches_laplace_expansion() {
    let mut r = rng(11);
    for i in 0..200 {
        let d = 2 + i % 7;
        let a = random_matrix(&mut r, d, -2.0, 2.0);
        let exact = laplace_det(a.as_slice(), d);
        assert!((a.determinant() - exact).abs() <= 1e-11 * (1.0 + exact.abs()), "d = {d}");
    }
}

#[test]
fn cofactor_matrix_matches_brute_minors() {
    let mut r = rng(12);
    for d in 2..=5 {
        let a = random_matrix(&mut r, d, -2.0, 2.0);
        let cof = a.cofactor();
        for i in 0..d {
            for j in 0..d {
                let rows: Vec<usize> = (0..d).filter(|&k| k != i).collect();
                let cols: Vec<usize> = (0..d).filter(|&k| k != j).collect();
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                let want = sign * brute_minor(&a, &rows, &cols);
                assert!((cof[(i, j)] - want).abs() < 1e-11 * (1.0 + want.abs()));
            }
        }
    }
}

#[test]
fn residual_matches_per_cell_summation() {
    for (d, n, seed) in [(2, 16, 1), (2, 33, 2), (3, 6, 3)] {
        let map = perturbed_map(d, n, 0.3 / n as f64, seed);
        for r in [2.0, 0.5, -1.0] {
            let spec = ConstraintSpec::exact(r, 1.5, d).unwrap();
            let ours = residual(&map, &spec).unwrap();
            let oracle = independent_residual(&map, r, 1.5);
            assert!((ours - oracle).abs() <= 1e-12 * oracle.abs(), "{ours} vs {oracle}");
        }
    }
}

#[test]
fn identity_residual_is_one() {
    let map = perturbed_map(2, 8, 0.0, 0);
    let spec = ConstraintSpec::exact(2.0, 1.5, 2).unwrap();
    assert!((residual(&map, &spec).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn minor_averages_match_brute_force() {
    let mut r = rng(13);
    for i in 0..40 {
        let d = 2 + i % 4;
        let m = random_matrix(&mut r, d, -2.0, 2.0);
        let rate = r_gen(&mut r);
        let nu = build_laminate(&m, rate, Depth::Fixed(1 + i % 5)).unwrap();
        for k in 1..=d {
            for rows in subsets(d, k) {
                for cols in subsets(d, k) {
                    let avg: f64 = nu.atoms.iter().map(|a| a.weight.to_f64() * brute_minor(&a.matrix, &rows, &cols)).sum();
                    let root = brute_minor(&m, &rows, &cols);
                    assert!((avg - root).abs() <= 1e-8 * (1.0 + root.abs()), "d = {d} minor {rows:?}x{cols:?}");
                }
            }
        }
        assert!(minors_consistency(&nu) <= 1e-8);
    }
}

fn r_gen(r: &mut rand_chacha::ChaCha8Rng) -> f64 {
    use rand::Rng;
    r.gen_range(-5.0..=5.0)
}

#[test]
fn first_level_moment_closed_form() {
    let m = Matrix::identity(3).unwrap();
    let nu = build_laminate(&m, 3.0, Depth::Fixed(1)).unwrap();
    assert_eq!(nu.atoms.len(), 4);
    for a in &nu.atoms {
        let dist = (a.matrix - m).frobenius_norm();
        assert!((dist - 2.0).abs() < 1e-14);
    }
    assert!((moment_p(&nu, &m, 2.0) - 4.0).abs() < 1e-12);
    assert!((barycenter(&nu) - m).frobenius_norm() < 1e-15);
}

#[test]
fn determinant_integral_is_fixed_by_boundary_values() {
    for seed in 0..4 {
        let map = perturbed_map(2, 24, 0.02, seed);
        let total: f64 = (0..map.grid.cell_count()).map(|c| cell_det(&map, c)).sum::<f64>() / map.grid.cell_count() as f64;
        assert!((total - 1.0).abs() < 1e-12);
        assert!((map.gradient_stats(1.5).pointwise_det_integral - total).abs() < 1e-12);
    }
}

#[test]
fn reciprocal_energy_arithmetic() {
    let e = EnergyDensity::new(1.5, Kappa::Reciprocal, 2).unwrap();
    for (eps, kappa) in [(0.5, 4.0), (0.1, 100.0), (0.02, 2500.0)] {
        let a = Matrix::identity(2).unwrap().scale(eps);
        let want = (2f64.sqrt() * eps).powf(1.5) + kappa;
        assert!((e.value(&a) - want).abs() < 1e-9 * want);
    }
}

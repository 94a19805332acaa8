//! Property tests for the laminate calculus, grids and realization.

mod common;

use lamforge::checks::{barycenter, moment_p};
use lamforge::grid::SimplicialGrid;
use lamforge::laminate::{build_laminate_in, AtomRole, Frame};
use lamforge::pamap::PiecewiseAffineMap;
use lamforge::realize::{realize_laminate, RealizeOpts};
use lamforge::{build_laminate, clamp_rate, ConstraintSpec, Depth, Dyadic, Matrix};
use proptest::prelude::*;

fn matrix(dims: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Matrix> {
    dims.prop_flat_map(|d| prop::collection::vec(-2.0..=2.0f64, d * d).prop_map(move |e| Matrix::new(d, &e).unwrap()))
}

/// Rotation from the signed SVD of a seeded random matrix.
fn rotation(d: usize, seed: u64) -> Matrix {
    let mut r = common::rng(seed);
    common::random_matrix(&mut r, d, -1.0, 1.0).signed_svd().unwrap().p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn laminate_invariants(m in matrix(2..=5), r in -5.0..=5.0f64, k in 1usize..=6) {
        let nu = build_laminate(&m, r, Depth::Fixed(k)).unwrap();
        let scale = 1.0 + m.frobenius_norm();
        prop_assert!((barycenter(&nu) - m).frobenius_norm() <= 1e-9 * scale);
        prop_assert_eq!(nu.total_mass(), Dyadic::ONE);
        prop_assert_eq!(nu.bad_mass(), Dyadic::pow2_inv(k as u32));
        for a in &nu.atoms {
            if a.role == AtomRole::Good {
                prop_assert!((a.matrix.determinant() - r).abs() <= 1e-8 * (1.0 + r.abs()));
            }
        }
        for step in &nu.tree {
            prop_assert!(step.max_rank_one_defect().unwrap() <= 1e-10);
        }
        let avg_det: f64 = nu.atoms.iter().map(|a| a.weight.to_f64() * a.matrix.determinant()).sum();
        prop_assert!((avg_det - m.determinant()).abs() <= 1e-8 * (1.0 + m.determinant().abs()));
    }

    #[test]
    fn lattice_frame_invariants(m in matrix(2..=3), r in -5.0..=5.0f64, k in 1usize..=5) {
        let nu = build_laminate_in(&m, r, Depth::Fixed(k), Frame::Lattice).unwrap();
        prop_assert!((barycenter(&nu) - m).frobenius_norm() <= 1e-9 * (1.0 + m.frobenius_norm()));
        prop_assert_eq!(nu.total_mass(), Dyadic::ONE);
        prop_assert!(nu.bad_mass() <= Dyadic::pow2_inv(k as u32));
        for step in &nu.tree {
            for dir in &step.directions {
                prop_assert_eq!(dir.b.iter().filter(|x| **x != 0.0).count(), 1);
            }
        }
    }

    #[test]
    fn scaling_covariance(m in matrix(2..=4), r in -5.0..=5.0f64, k in 1usize..=5, s in prop::sample::select(vec![0.5, 2.0, 3.0])) {
        let d = m.dim() as i32;
        let p = 1.5;
        let base = moment_p(&build_laminate(&m, r, Depth::Fixed(k)).unwrap(), &m, p);
        let sm = m.scale(s);
        let scaled = moment_p(&build_laminate(&sm, s.powi(d) * r, Depth::Fixed(k)).unwrap(), &sm, p);
        prop_assert!((scaled - s.powf(p) * base).abs() <= 1e-8 * (s.powf(p) * base).max(1e-300));
    }

    #[test]
    fn rotation_invariance(m in matrix(2..=4), r in -5.0..=5.0f64, k in 1usize..=4, seed in 0u64..1000) {
        let d = m.dim();
        let (p, q) = (rotation(d, seed), rotation(d, seed + 7919));
        let rm = p * m * q.transpose();
        let a = moment_p(&build_laminate(&m, r, Depth::Fixed(k)).unwrap(), &m, 2.0);
        let b = moment_p(&build_laminate(&rm, r, Depth::Fixed(k)).unwrap(), &rm, 2.0);
        prop_assert!((a - b).abs() <= 1e-7 * (1.0 + a), "{} vs {}", a, b);
    }

    #[test]
    fn clamp_projects(t in -10.0..10.0f64, a in -5.0..5.0f64, w in 0.0..5.0f64) {
        let c = clamp_rate(t, a, a + w).unwrap();
        prop_assert!(a <= c && c <= a + w);
        prop_assert_eq!(clamp_rate(c, a, a + w).unwrap(), c);
        if (a..=a + w).contains(&t) {
            prop_assert_eq!(c, t);
        }
    }

    #[test]
    fn residual_vanishes_exactly_on_the_constraint(det in 0.1..4.0f64, r in 0.1..4.0f64) {
        let a = Matrix::diag(&[det, 1.0]).unwrap();
        let spec = ConstraintSpec::exact(r, 1.5, 2).unwrap();
        let dens = spec.residual_density(0, &a);
        prop_assert!(dens >= 0.0);
        prop_assert_eq!(dens == 0.0, (det - r).abs() == 0.0);
        let interval = ConstraintSpec::interval(r, r + 1.0, 1.5, 2).unwrap();
        prop_assert_eq!(interval.residual_density(0, &a) == 0.0, det >= r && det <= r + 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn det_integral_depends_only_on_boundary(n in 4usize..24, seed in 0u64..1000, amp in 0.0..0.4f64) {
        let map = common::perturbed_map(2, n, amp / n as f64, seed);
        prop_assert!((map.gradient_stats(1.5).pointwise_det_integral - 1.0).abs() < 1e-12);
        prop_assert!(map.conformity_error() < 1e-12);
    }

    #[test]
    fn linear_maps_have_constant_gradient(m in matrix(2..=3), n in 1usize..6) {
        let grid = SimplicialGrid::unit(m.dim(), n).unwrap();
        let map = PiecewiseAffineMap::linear(grid.clone(), &m).unwrap();
        for c in 0..grid.cell_count() {
            prop_assert!(map.gradient(c).max_abs_diff(&m) < 1e-12 * (1.0 + m.frobenius_norm()) * n as f64);
        }
    }

    #[test]
    fn realization_keeps_boundary_and_det_integral(k in 1usize..=3, r in prop::sample::select(vec![0.5, 2.0, 3.0])) {
        let grid = SimplicialGrid::unit(2, 64).unwrap();
        let mut map = PiecewiseAffineMap::identity(grid.clone());
        let before = map.clone();
        let nu = build_laminate_in(&Matrix::identity(2).unwrap(), r, Depth::Fixed(k), Frame::Lattice).unwrap();
        let all: Vec<usize> = (0..grid.cell_count()).collect();
        realize_laminate(&mut map, &all, &nu, 2, 4, RealizeOpts::default()).unwrap();
        for v in 0..grid.vertex_count() {
            if grid.is_boundary_vertex(v) {
                prop_assert_eq!(map.value(v), before.value(v));
            }
        }
        prop_assert!((map.gradient_stats(1.5).pointwise_det_integral - 1.0).abs() < 1e-10);
    }
}

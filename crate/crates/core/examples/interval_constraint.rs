//! Interval constraint `1 <= det ∇v <= 3` against boundary data `x ↦ A x`
//! with `det A = 1/2`, plus the rate clamp used to pick targets.

use lamforge::grid::SimplicialGrid;
use lamforge::integrator::{solve_constraint, BoundaryData, IntegratorOpts};
use lamforge::{clamp_rate, ConstraintSpec, Matrix};

fn main() -> lamforge::Result<()> {
    let a = Matrix::from_rows(&[&[1.0, 0.5], &[0.0, 0.5]])?;
    println!("det A = {}, clamped target {}", a.determinant(), clamp_rate(a.determinant(), 1.0, 3.0)?);

    let grid = SimplicialGrid::unit(2, 64)?;
    let spec = ConstraintSpec::interval(1.0, 3.0, 1.5, 2)?;
    let (_map, rep) = solve_constraint(&grid, &BoundaryData::linear(a), &spec, 4, &IntegratorOpts::default())?;
    for r in &rep.diagnostics.records {
        println!("iteration {} residual {:.4} violating volume {:.4}", r.iteration, r.residual, r.violation_volume);
    }
    println!("area within 0.05 of [1, 3]: {:.3}", rep.area_within_005);
    Ok(())
}

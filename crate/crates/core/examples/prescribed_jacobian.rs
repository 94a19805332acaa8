//! Convex integration for `det ∇v = 2` with `v(x) = x` on the boundary of the
//! unit square.

use lamforge::grid::SimplicialGrid;
use lamforge::integrator::{solve_prescribed_jacobian, BoundaryData, IntegratorOpts};
use lamforge::Field;

fn main() -> lamforge::Result<()> {
    let n = std::env::args().nth(1).map_or(Ok(128), |s| s.parse()).expect("n must be an integer");
    let grid = SimplicialGrid::unit(2, n)?;
    let opts = IntegratorOpts::default();
    let (_map, rep) = solve_prescribed_jacobian(&grid, &BoundaryData::identity(), Field::Constant(2.0), 1.5, 5, &opts)?;

    let d = &rep.diagnostics;
    println!("iteration   residual   ratio   increment   violating");
    println!("{:>9} {:>10.4}", 0, d.initial_residual);
    for r in &d.records {
        println!(
            "{:>9} {:>10.4} {:>7.3} {:>11.4} {:>11.4}",
            r.iteration, r.residual, r.decay_ratio, r.increment_lp, r.violation_volume
        );
    }
    println!("area with |det - 2| <= 0.05: {:.3}", rep.area_within_005);
    println!(
        "Σ vol det ∇v = {:.6}, reference ∫ det ∇g = {:.6}",
        rep.stats.pointwise_det_integral, rep.reference_det_integral
    );
    Ok(())
}

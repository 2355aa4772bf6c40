//! Evolves the truncated Gaussian prior under the pendulum flow and tracks
//! mass, positivity and the moments along the way.

use std::f64::consts::PI;
use std::sync::Arc;

use fvm_markov::{
    assemble, compute_fluxes, moments, normalize, pendulum_field, project, BoundaryCondition, BoxDomain, Grid,
    Quadrature,
};

fn main() -> fvm_markov::Result<()> {
    let n = 100;
    let grid = Arc::new(Grid::new(
        BoxDomain::cube(2, -PI, PI)?,
        vec![n, n],
        vec![BoundaryCondition::Periodic, BoundaryCondition::Neumann],
    )?);
    let prior = |x: &[f64]| (-(x[0] * x[0] + x[1] * x[1]) / 1.28).exp() / (1.28 * PI);
    let projected = project(prior, &grid, Quadrature::Midpoint)?;
    println!("mass inside the box before renormalizing: {:.6}", projected.mass());
    let mut p = normalize(&projected)?;

    let fluxes = compute_fluxes(&pendulum_field(1.0)?, &grid, Quadrature::Midpoint)?;
    let op = assemble(&fluxes, &grid, grid.h_min() / (2.0 * PI + 1.0))?;
    let mut worst_drift: f64 = 0.0;
    let mut min_value = f64::INFINITY;
    for step in 1..=1000 {
        p = op.step(&p)?;
        worst_drift = worst_drift.max((p.mass() - 1.0).abs());
        min_value = min_value.min(p.min_value());
        if step % 250 == 0 {
            let m = moments(&p);
            let std = m.std();
            println!(
                "t = {:6.3}: mean ({:+.1e}, {:+.1e}), std ({:.4}, {:.4})",
                step as f64 * op.dt(),
                m.mean[0],
                m.mean[1],
                std[0],
                std[1]
            );
        }
    }
    println!("1000 steps: worst mass drift {worst_drift:.1e}, smallest cell value {min_value:.3e}");
    Ok(())
}

//! Face fluxes of the pendulum field and their discrete divergence.
//!
//! The field is divergence free, so the cell sums vanish wherever every face
//! is kept. Rows touching the Neumann walls lose the omitted wall flux.

use std::f64::consts::PI;

use fvm_markov::{compute_fluxes, discrete_divergence, pendulum_field, BoundaryCondition, BoxDomain, Grid, Quadrature};

fn main() -> fvm_markov::Result<()> {
    let n = 16;
    let grid = Grid::new(
        BoxDomain::cube(2, -PI, PI)?,
        vec![n, n],
        vec![BoundaryCondition::Periodic, BoundaryCondition::Neumann],
    )?;
    let field = pendulum_field(1.0)?;
    for quad in [Quadrature::Midpoint, Quadrature::Gauss(3)] {
        let fluxes = compute_fluxes(&field, &grid, quad)?;
        let div = discrete_divergence(&fluxes, &grid)?;
        let wall_rows = |c: usize| {
            let j = grid.multi_index(c)[1];
            j == 0 || j == n - 1
        };
        let interior = (0..grid.num_cells()).filter(|&c| !wall_rows(c)).map(|c| div[c].abs()).fold(0.0, f64::max);
        let walls = (0..grid.num_cells()).filter(|&c| wall_rows(c)).map(|c| div[c].abs()).fold(0.0, f64::max);
        println!("{quad:?}: max |div| interior {interior:.2e}, wall rows {walls:.3}");
    }
    Ok(())
}

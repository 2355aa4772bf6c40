//! Assembles the pendulum transition matrix at
//! `Δt = h/(2π+1)` and checks that it is a stochastic matrix.

use std::f64::consts::PI;
use std::sync::Arc;

use fvm_markov::{
    assemble, assemble_unchecked, compute_fluxes, max_stable_dt, pendulum_field, BoundaryCondition, BoxDomain, Grid,
    Quadrature, PENDULUM_XI,
};

fn main() -> fvm_markov::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let grid = Arc::new(Grid::new(
        BoxDomain::cube(2, -PI, PI)?,
        vec![n, n],
        vec![BoundaryCondition::Periodic, BoundaryCondition::Neumann],
    )?);
    let fluxes = compute_fluxes(&pendulum_field(1.0)?, &grid, Quadrature::Midpoint)?;
    let cfl = max_stable_dt(&fluxes, &grid, PENDULUM_XI)?;
    let dt = grid.h_min() / (2.0 * PI + 1.0);
    println!("h = {:.5}, dt = {dt:.6}, CFL bound with xi = pi/(2pi+1): {:.6}", grid.h_min(), cfl.dt_max);

    let op = assemble(&fluxes, &grid, dt)?;
    let rep = op.verify_markov(1e-12);
    println!(
        "{} cells, {} nonzeros, min entry {:.3e}, max row-sum error {:.1e}, stochastic: {}",
        op.num_cells(),
        op.nnz(),
        rep.min_entry,
        rep.max_row_sum_err,
        rep.is_markov
    );

    match assemble(&fluxes, &grid, 2.0 * cfl.dt_max) {
        Err(e) => println!("twice the bound is rejected: {e}"),
        Ok(_) => println!("twice the bound was accepted"),
    }
    let loose = assemble_unchecked(&fluxes, &grid, 2.0 * cfl.dt_max)?;
    println!("unchecked at twice the bound: min entry {:.3}", loose.verify_markov(1e-12).min_entry);
    Ok(())
}

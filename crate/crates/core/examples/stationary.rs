//! Stationary densities by power iteration.
//!
//! Rigid rotation on a fully periodic square is divergence free with no
//! walls, so the uniform density is stationary. A constant drift against a
//! Neumann wall piles all mass into the cells along that wall.

use std::sync::Arc;

use fvm_markov::{
    assemble, compute_fluxes, constant_field, marginal, rotation_field, BoundaryCondition, BoxDomain, Density, Grid,
    Quadrature,
};

fn main() -> fvm_markov::Result<()> {
    let periodic = Arc::new(Grid::new(
        BoxDomain::cube(2, -1.0, 1.0)?,
        vec![32, 32],
        vec![BoundaryCondition::Periodic; 2],
    )?);
    let fl = compute_fluxes(&rotation_field(), &periodic, Quadrature::Midpoint)?;
    let op = assemble(&fl, &periodic, 0.5 * periodic.h_min())?;
    let st = op.stationary(1e-13, 10_000)?;
    let dev = fvm_markov::l1_distance(&st, &Density::uniform(periodic.clone()))?;
    println!("rotation: L1 distance of the stationary density from uniform {dev:.2e}");

    let walled = Arc::new(Grid::new(
        BoxDomain::cube(1, 0.0, 1.0)?,
        vec![20],
        vec![BoundaryCondition::Neumann],
    )?);
    let fl = compute_fluxes(&constant_field(vec![1.0])?, &walled, Quadrature::Midpoint)?;
    let op = assemble(&fl, &walled, 0.5 * walled.h_min())?;
    let st = op.stationary(1e-13, 10_000)?;
    let line = marginal(&st, 0)?;
    println!("drift into a wall: mass in the last cell {:.6}", line.masses()[19]);
    Ok(())
}

//! Constant advection on a periodic line: the transition matrix is the
//! circulant with `1 − ν` on the diagonal and `ν` on the cyclic
//! superdiagonal, `ν` being the Courant number.

use std::sync::Arc;

use fvm_markov::{assemble, compute_fluxes, constant_field, BoundaryCondition, BoxDomain, Grid, Quadrature};

fn main() -> fvm_markov::Result<()> {
    let (n, c, nu) = (8, 1.5, 0.5);
    let grid = Arc::new(Grid::new(BoxDomain::cube(1, 0.0, 1.0)?, vec![n], vec![BoundaryCondition::Periodic])?);
    let h = grid.spacing()[0];
    let fluxes = compute_fluxes(&constant_field(vec![c])?, &grid, Quadrature::Midpoint)?;
    let op = assemble(&fluxes, &grid, nu * h / c)?;
    for r in 0..n {
        let row: Vec<String> = (0..n).map(|k| format!("{:4.2}", op.get(r, k))).collect();
        println!("{}", row.join(" "));
    }
    let worst = (0..n)
        .flat_map(|r| (0..n).map(move |k| (r, k)))
        .map(|(r, k)| {
            let expected = if k == r { 1.0 - nu } else if k == (r + 1) % n { nu } else { 0.0 };
            (op.get(r, k) - expected).abs()
        })
        .fold(0.0, f64::max);
    println!("max deviation from the circulant: {worst:.1e}");
    Ok(())
}

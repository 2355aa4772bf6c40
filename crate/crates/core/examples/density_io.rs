//! Writes a density snapshot and observation file, then reads both back.

use std::f64::consts::PI;
use std::sync::Arc;

use fvm_markov::io::{read_density, read_observations, write_density, write_observations};
use fvm_markov::{normalize, project, BoundaryCondition, BoxDomain, Grid, Quadrature};

fn main() -> fvm_markov::Result<()> {
    let grid = Arc::new(Grid::new(
        BoxDomain::cube(2, -PI, PI)?,
        vec![24, 24],
        vec![BoundaryCondition::Periodic, BoundaryCondition::Neumann],
    )?);
    let p = normalize(&project(|x| (-(x[0] * x[0] + x[1] * x[1])).exp(), &grid, Quadrature::Midpoint)?)?;

    let mut buf = Vec::new();
    write_density(&mut buf, &p, 0.0)?;
    let text = String::from_utf8(buf.clone()).expect("ascii");
    for line in text.lines().take(6) {
        println!("{line}");
    }
    let back = read_density(buf.as_slice())?.into_density_on(&grid)?;
    println!("snapshot round trip exact: {}", back == p);

    let obs = vec![(2.0 * PI / 7.0, vec![0.41]), (4.0 * PI / 7.0, vec![0.12])];
    let mut buf = Vec::new();
    write_observations(&mut buf, &obs)?;
    print!("{}", String::from_utf8(buf.clone()).expect("ascii"));
    println!("observation round trip exact: {}", read_observations(buf.as_slice())? == obs);
    Ok(())
}

//! Tracks a pendulum from noisy measurements of `|x₁|`.
//!
//! The observation cannot tell `x₁` from `−x₁`, and the prior and the flow
//! are both symmetric under `x ↦ −x`, so the posterior stays symmetric: its
//! mean sits at the origin and the angle marginal splits into two modes.

use std::f64::consts::PI;
use std::sync::Arc;

use fvm_markov::filter::run_filter_with_snapshots;
use fvm_markov::{
    assemble, compute_fluxes, count_modes, gaussian_abs_position_model, marginal, normalize, pendulum_field,
    point_reflection_defect, project, simulate_truth, synthesize_observations, BoundaryCondition, BoxDomain, Grid,
    Quadrature,
};

fn main() -> fvm_markov::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let grid = Arc::new(Grid::new(
        BoxDomain::cube(2, -PI, PI)?,
        vec![n, n],
        vec![BoundaryCondition::Periodic, BoundaryCondition::Neumann],
    )?);
    let field = pendulum_field(1.0)?;
    let op = assemble(
        &compute_fluxes(&field, &grid, Quadrature::Midpoint)?,
        &grid,
        grid.h_min() / (2.0 * PI + 1.0),
    )?;
    let prior = normalize(&project(
        |x| (-(x[0] * x[0] + x[1] * x[1]) / 1.28).exp(),
        &grid,
        Quadrature::Midpoint,
    )?)?;

    let times: Vec<f64> = (1..=6).map(|k| k as f64 * 2.0 * PI / 7.0).collect();
    let truth = simulate_truth(&field, &[0.2 * PI, 0.0], &times, Some(&grid))?;
    let obs = synthesize_observations(&times, &truth, 0.1, 20140501)?;
    let model = gaussian_abs_position_model(0.1)?;
    let run = run_filter_with_snapshots(prior, &op, &model, &obs, 2.0 * PI, &[0.0, PI / 6.0, PI / 3.0, PI])?;

    for (o, x) in obs.entries().iter().zip(&truth) {
        println!("t = {:.3}: z = {:+.3}, truth x1 = {:+.3}", o.t, o.z[0], x[0]);
    }
    for s in &run.snapshots {
        let line = marginal(&s.density, 0)?;
        println!(
            "t = {:.3}: {} mode(s) in x1, reflection defect {:.1e}",
            s.snap.actual,
            count_modes(&line, 0.1),
            point_reflection_defect(&s.density)
        );
    }
    let last = run.state.history().last().expect("non-empty history");
    println!(
        "t = {:.3}: mean ({:+.1e}, {:+.1e}), std ({:.3}, {:.3}), log evidence {:.4}",
        last.t,
        last.mean[0],
        last.mean[1],
        last.std[0],
        last.std[1],
        run.state.log_evidence()
    );
    Ok(())
}

//! Refinement study of the pendulum flow started from a Gaussian at
//! `(0.6π, 0)` with covariance `0.64 I`.
//!
//! `cargo run --release --example convergence_table -- 0.785398 50 100 200 400`

use std::f64::consts::PI;

use fvm_markov::bench::{convergence_rows, convergence_table, expectation_rows, StepRule, Study};
use fvm_markov::{pendulum_field, BoundaryCondition, BoxDomain, Quadrature, PENDULUM_XI};

fn main() -> fvm_markov::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let t_final = args.first().map(|s| fvm_markov::parse_real(s)).transpose()?.unwrap_or(PI / 4.0);
    let n_list: Vec<usize> = if args.len() > 1 {
        args[1..].iter().map(|s| s.parse().expect("cells per axis")).collect()
    } else {
        vec![50, 100, 200]
    };

    let field = pendulum_field(1.0)?;
    let prior = |x: &[f64]| {
        let (a, b) = (x[0] - 0.6 * PI, x[1]);
        (-(a * a + b * b) / 1.28).exp() / (1.28 * PI)
    };
    let study = Study {
        field: &field,
        domain: BoxDomain::cube(2, -PI, PI)?,
        bc: vec![BoundaryCondition::Periodic, BoundaryCondition::Neumann],
        prior: &prior,
        t_final,
        step: StepRule::SpeedBound { xi: PENDULUM_XI },
        quadrature: Quadrature::Midpoint,
    };
    let levels = study.levels(&n_list)?;
    println!("t = {t_final:.6}");
    print!("{}", convergence_table(&convergence_rows(&levels)?));
    println!("\nE[x1^2 + x2^2]");
    for r in expectation_rows(&levels, |x| x[0] * x[0] + x[1] * x[1])? {
        println!("{:>6}  {:.8}  {:?}", r.n, r.value, r.order);
    }
    Ok(())
}

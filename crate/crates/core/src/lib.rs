//! Upwind finite volume approximation of the transfer operator of an ODE
//! `dx/dt = v(x)` as a sparse stochastic matrix, with density evolution and
//! grid-based Bayesian filtering on top.
//!
//! ```
//! use std::sync::Arc;
//! use fvm_markov::{assemble, compute_fluxes, pendulum_field, BoundaryCondition, BoxDomain, Grid, Quadrature};
//!
//! let pi = std::f64::consts::PI;
//! let grid = Arc::new(Grid::new(
//!     BoxDomain::cube(2, -pi, pi).unwrap(),
//!     vec![50, 50],
//!     vec![BoundaryCondition::Periodic, BoundaryCondition::Neumann],
//! ).unwrap());
//! let fluxes = compute_fluxes(&pendulum_field(1.0).unwrap(), &grid, Quadrature::Midpoint).unwrap();
//! let op = assemble(&fluxes, &grid, grid.h_min() / (2.0 * pi + 1.0)).unwrap();
//! assert!(op.verify_markov(1e-12).is_markov);
//! ```

pub mod bench;
pub mod cli;
pub mod config;
pub mod density;
pub mod error;
pub mod filter;
pub mod grid;
pub mod io;
pub mod operator;
pub mod quadrature;
pub mod velocity;

pub use density::{
    count_modes, expectation, l1_distance, marginal, moments, normalize, point_reflection_defect, project, Density,
    Moments,
};
pub use error::{Error, Result};
pub use filter::{
    gaussian_abs_position_model, run_filter, run_filter_with_snapshots, simulate_truth, synthesize_observations,
    FilterRun, FilterState, HistoryRecord, Observation, ObservationModel, ObservationSequence,
};
pub use grid::{build_grid, enumerate_edges, BoundaryCondition, BoxDomain, Edge, Grid, Neighbor};
pub use operator::{assemble, assemble_unchecked, max_stable_dt, CflReport, MarkovReport, TransitionOperator};
pub use quadrature::Quadrature;
pub use velocity::{
    compute_fluxes, constant_field, discrete_divergence, pendulum_field, rotation_field, EdgeFluxes, VelocityField,
};

/// CFL safety margin `ξ = π/(2π+1)`, which makes the pendulum
/// step `Δt = h/(2π+1)`.
pub const PENDULUM_XI: f64 = std::f64::consts::PI / (2.0 * std::f64::consts::PI + 1.0);

/// Parses a real with `pi` allowed as a factor: `1.5`, `pi`, `-pi`, `0.6pi`,
/// `0.6*pi`, `2*pi/7`, `1/3`.
pub fn parse_real(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a real: '{s}'"));
    if s.is_empty() {
        return Err(bad());
    }
    if let Ok(v) = s.parse::<f64>() {
        return Ok(v);
    }
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a, Some(b)),
        None => (s, None),
    };
    let product = |t: &str| -> Result<f64> {
        let t = t.trim();
        let (sign, t) = match t.strip_prefix('-') {
            Some(rest) => (-1.0, rest),
            None => (1.0, t.strip_prefix('+').unwrap_or(t)),
        };
        let mut v = sign;
        let mut rest = t;
        if let Some(head) = rest.strip_suffix("pi") {
            v *= std::f64::consts::PI;
            rest = head.strip_suffix('*').unwrap_or(head);
            if rest.is_empty() {
                return Ok(v);
            }
        }
        for factor in rest.split('*') {
            v *= factor.trim().parse::<f64>().map_err(|_| bad())?;
        }
        Ok(v)
    };
    let v = product(num)?;
    match den {
        Some(d) => {
            let d = product(d)?;
            if d == 0.0 {
                return Err(bad());
            }
            Ok(v / d)
        }
        None => Ok(v),
    }
}

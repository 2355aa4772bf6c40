//! Mesh-refinement studies: successive L¹ differences, effective orders and
//! expectation convergence.
//!
//! Each level projects the prior (midpoint rule unless told otherwise),
//! normalizes it, and evolves to `t_final` with a step that divides
//! `t_final` exactly. Levels are independent and run in parallel; every
//! level is itself deterministic, so the results do not depend on the
//! thread count.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::density::{expectation, l1_distance, normalize, project, Density};
use crate::error::{Error, Result};
use crate::grid::{BoundaryCondition, BoxDomain, Grid};
use crate::io::fmt_real;
use crate::operator::{assemble, max_stable_dt, TransitionOperator};
use crate::quadrature::Quadrature;
use crate::velocity::{compute_fluxes, VelocityField};

/// How the per-level time step is chosen before it is shrunk to divide
/// `t_final`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `Δt = (1 − ξ) h_min / Σ sup|v_i|`, the a priori bound. For the
    /// pendulum with ξ = π/(2π+1) this is `h/(2π+1)`.
    SpeedBound { xi: f64 },
    /// The largest step allowed by the assembled fluxes.
    CflBound { xi: f64 },
    Fixed(f64),
}

impl StepRule {
    pub fn dt(&self, field: &VelocityField, grid: &Grid, quadrature: Quadrature) -> Result<f64> {
        let check_xi = |xi: f64| {
            if (0.0..1.0).contains(&xi) {
                Ok(())
            } else {
                Err(Error::XiOutOfRange(xi))
            }
        };
        match *self {
            StepRule::SpeedBound { xi } => {
                check_xi(xi)?;
                let s = field.speed_bound(grid);
                Ok(if s > 0.0 { (1.0 - xi) * grid.h_min() / s } else { f64::INFINITY })
            }
            StepRule::CflBound { xi } => {
                let fl = compute_fluxes(field, grid, quadrature)?;
                Ok(max_stable_dt(&fl, grid, xi)?.dt_max)
            }
            StepRule::Fixed(dt) if dt > 0.0 && dt.is_finite() => Ok(dt),
            StepRule::Fixed(dt) => Err(Error::InvalidArgument(format!("step must be positive, got {dt}"))),
        }
    }
}

/// Largest step `≤ dt` that divides `t_final` into whole steps.
pub fn fit_step(dt: f64, t_final: f64) -> f64 {
    if t_final <= 0.0 {
        return if dt.is_finite() { dt } else { 1.0 };
    }
    if !dt.is_finite() {
        return t_final;
    }
    let steps = (t_final / dt).ceil().max(1.0);
    let fitted = t_final / steps;
    if fitted > dt {
        t_final / (steps + 1.0)
    } else {
        fitted
    }
}

/// Problem shared by every level of a study.
#[derive(Clone)]
pub struct Study<'a> {
    pub field: &'a VelocityField,
    pub domain: BoxDomain,
    pub bc: Vec<BoundaryCondition>,
    pub prior: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    pub t_final: f64,
    pub step: StepRule,
    pub quadrature: Quadrature,
}

/// One evolved level.
#[derive(Debug, Clone)]
pub struct Level {
    pub n: usize,
    pub dt: f64,
    pub steps: u64,
    pub density: Density,
}

impl Study<'_> {
    pub fn grid(&self, n: usize) -> Result<Arc<Grid>> {
        let d = self.domain.dim();
        Ok(Arc::new(Grid::new(self.domain.clone(), vec![n; d], self.bc.clone())?))
    }

    pub fn operator(&self, grid: &Arc<Grid>) -> Result<TransitionOperator> {
        let dt = fit_step(self.step.dt(self.field, grid, self.quadrature)?, self.t_final);
        let fl = compute_fluxes(self.field, grid, self.quadrature)?;
        assemble(&fl, grid, dt)
    }

    /// Projects, normalizes and evolves the prior on an `n^d` grid.
    pub fn level(&self, n: usize) -> Result<Level> {
        let grid = self.grid(n)?;
        let op = self.operator(&grid)?;
        let p0 = normalize(&project(self.prior, &grid, Quadrature::Midpoint)?)?;
        let steps = op.steps_until(self.t_final);
        let density = op.evolve(&p0, self.t_final)?;
        Ok(Level {
            n,
            dt: op.dt(),
            steps,
            density,
        })
    }

    pub fn levels(&self, n_list: &[usize]) -> Result<Vec<Level>> {
        validate_levels(n_list)?;
        n_list.par_iter().map(|&n| self.level(n)).collect()
    }
}

/// `n_list` must be strictly increasing with each entry dividing the next.
pub fn validate_levels(n_list: &[usize]) -> Result<()> {
    if n_list.len() < 2 {
        return Err(Error::InvalidArgument("a study needs at least two levels".into()));
    }
    for w in n_list.windows(2) {
        if w[0] == 0 || w[1] <= w[0] || w[1] % w[0] != 0 {
            return Err(Error::InvalidArgument(format!(
                "levels must increase by integer refinement, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    /// `‖p_n − p_{next n}‖_{L¹}`.
    pub l1_diff: f64,
    /// `−log₂(l1_diff / previous l1_diff)`; `None` on the first row.
    pub effective_order: Option<f64>,
}

/// `−log₂(fine/coarse)`, defined only for positive differences.
pub fn effective_order(coarse: f64, fine: f64) -> Option<f64> {
    (coarse > 0.0 && fine > 0.0).then(|| -(fine / coarse).log2())
}

/// One row per consecutive pair of levels, in the layout of the usual
/// refinement table.
pub fn convergence_rows(levels: &[Level]) -> Result<Vec<ConvergenceRow>> {
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels.len().saturating_sub(1));
    for w in levels.windows(2) {
        let l1_diff = l1_distance(&w[0].density, &w[1].density)?;
        let effective_order = rows.last().and_then(|prev| effective_order(prev.l1_diff, l1_diff));
        rows.push(ConvergenceRow {
            n: w[0].n,
            l1_diff,
            effective_order,
        });
    }
    Ok(rows)
}

pub fn convergence_study(study: &Study<'_>, n_list: &[usize]) -> Result<Vec<ConvergenceRow>> {
    convergence_rows(&study.levels(n_list)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationRow {
    pub n: usize,
    pub value: f64,
    /// `|E_n − E_previous|`; `None` on the first row.
    pub diff: Option<f64>,
    /// `−log₂` of the ratio of this difference to the previous one.
    pub order: Option<f64>,
}

pub fn expectation_rows<G>(levels: &[Level], g: G) -> Result<Vec<ExpectationRow>>
where
    G: Fn(&[f64]) -> f64,
{
    let mut rows: Vec<ExpectationRow> = Vec::with_capacity(levels.len());
    for level in levels {
        let value = expectation(&level.density, &g)?;
        let diff = rows.last().map(|prev| (value - prev.value).abs());
        let order = match (rows.last().and_then(|r| r.diff), diff) {
            (Some(a), Some(b)) => effective_order(a, b),
            _ => None,
        };
        rows.push(ExpectationRow {
            n: level.n,
            value,
            diff,
            order,
        });
    }
    Ok(rows)
}

pub fn expectation_convergence<G>(study: &Study<'_>, g: G, n_list: &[usize]) -> Result<Vec<ExpectationRow>>
where
    G: Fn(&[f64]) -> f64,
{
    expectation_rows(&study.levels(n_list)?, g)
}

/// `n,l1_diff,effective_order`; the first order cell is empty.
pub fn write_convergence_csv<W: Write>(mut w: W, rows: &[ConvergenceRow]) -> Result<()> {
    writeln!(w, "n,l1_diff,effective_order")?;
    for r in rows {
        let order = r.effective_order.map(fmt_real).unwrap_or_default();
        writeln!(w, "{},{},{}", r.n, fmt_real(r.l1_diff), order)?;
    }
    Ok(())
}

/// Aligned text table with columns N, `‖p_h − p_{h/2}‖` and order.
pub fn convergence_table(rows: &[ConvergenceRow]) -> String {
    let mut s = format!("{:>6}  {:>14}  {:>10}\n", "N", "||p_h-p_h/2||", "order");
    for r in rows {
        let order = r.effective_order.map(|o| format!("{o:.4}")).unwrap_or_else(|| "-".into());
        s.push_str(&format!("{:>6}  {:>14.5}  {:>10}\n", r.n, r.l1_diff, order));
    }
    s
}

pub fn write_expectation_csv<W: Write>(mut w: W, rows: &[ExpectationRow]) -> Result<()> {
    writeln!(w, "n,expectation,diff,order")?;
    let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
    for r in rows {
        writeln!(w, "{},{},{},{}", r.n, fmt_real(r.value), opt(r.diff), opt(r.order))?;
    }
    Ok(())
}

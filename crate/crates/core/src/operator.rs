//! The transition matrix `S = I − Δt A` of the upwind scheme.
//!
//! `S` acts on row vectors of cell masses, `m^{k+1} = m^k S`, so row `K`
//! says where the mass of cell `K` goes in one step. On a uniform grid all
//! cells have the same measure, and the same matrix maps cell averages to
//! cell averages.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::density::Density;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::velocity::EdgeFluxes;

/// Diagonal entries in `[-DIAGONAL_ROUNDING, 0)` are rounding noise at the
/// CFL limit and are stored as zero.
const DIAGONAL_ROUNDING: f64 = 4.0 * f64::EPSILON;

/// Chunk size for parallel row gathers.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct CflReport {
    /// `f64::INFINITY` when no cell has outflow.
    pub dt_max: f64,
    pub xi: f64,
    pub binding_cell: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovReport {
    pub min_entry: f64,
    pub max_row_sum_err: f64,
    pub is_markov: bool,
}

#[derive(Debug, Clone)]
pub struct TransitionOperator {
    grid: Arc<Grid>,
    dt: f64,
    // compressed rows, sorted columns
    row_offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    // same entries by destination, sorted sources
    in_offsets: Vec<usize>,
    in_rows: Vec<usize>,
    in_vals: Vec<f64>,
    mass_conserving: bool,
}

fn outflow_sums(fluxes: &EdgeFluxes, grid: &Grid) -> Result<Vec<f64>> {
    if fluxes.len() != grid.edges().len() {
        return Err(Error::DimensionMismatch {
            expected: grid.edges().len(),
            got: fluxes.len(),
        });
    }
    Ok((0..grid.num_cells())
        .map(|c| {
            grid.neighbors(c)
                .expect("cell in range")
                .iter()
                .map(|n| fluxes.outward(n.edge, n.orientation).max(0.0))
                .sum()
        })
        .collect())
}

/// Largest `Δt` with `Δt Σ_L (v_KL)_+ ≤ (1 − ξ)|K|` for every cell.
pub fn max_stable_dt(fluxes: &EdgeFluxes, grid: &Grid, xi: f64) -> Result<CflReport> {
    if !(0.0..1.0).contains(&xi) {
        return Err(Error::XiOutOfRange(xi));
    }
    let out = outflow_sums(fluxes, grid)?;
    let vol = grid.cell_volume();
    let mut report = CflReport {
        dt_max: f64::INFINITY,
        xi,
        binding_cell: None,
    };
    for (c, &o) in out.iter().enumerate() {
        if o > 0.0 {
            let dt = (1.0 - xi) * vol / o;
            if dt < report.dt_max {
                report.dt_max = dt;
                report.binding_cell = Some(c);
            }
        }
    }
    Ok(report)
}

/// Assembles `S` for step `dt`, refusing steps that break the CFL condition.
pub fn assemble(fluxes: &EdgeFluxes, grid: &Arc<Grid>, dt: f64) -> Result<TransitionOperator> {
    build(fluxes, grid, dt, true)
}

/// Like [`assemble`] but keeps negative diagonals. Only useful for showing
/// what goes wrong without the CFL condition.
pub fn assemble_unchecked(fluxes: &EdgeFluxes, grid: &Arc<Grid>, dt: f64) -> Result<TransitionOperator> {
    build(fluxes, grid, dt, false)
}

fn build(fluxes: &EdgeFluxes, grid: &Arc<Grid>, dt: f64, checked: bool) -> Result<TransitionOperator> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    if fluxes.len() != grid.edges().len() {
        return Err(Error::DimensionMismatch {
            expected: grid.edges().len(),
            got: fluxes.len(),
        });
    }
    let n = grid.num_cells();
    let vol = grid.cell_volume();
    let mut row_offsets = Vec::with_capacity(n + 1);
    row_offsets.push(0);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut mass_conserving = true;
    let mut worst: Option<(usize, f64)> = None;
    let mut row: Vec<(usize, f64)> = Vec::new();
    for k in 0..n {
        row.clear();
        let mut out = 0.0;
        for nb in grid.neighbors(k)? {
            let v = fluxes.outward(nb.edge, nb.orientation);
            if v > 0.0 {
                out += v;
                match nb.cell {
                    Some(l) => row.push((l, dt * v / vol)),
                    None => mass_conserving = false,
                }
            }
        }
        let mut diag = 1.0 - dt * out / vol;
        if diag < 0.0 {
            if checked && diag < -DIAGONAL_ROUNDING {
                if worst.map_or(true, |(_, w)| diag < w) {
                    worst = Some((k, diag));
                }
            } else if checked {
                diag = 0.0;
            }
        }
        row.push((k, diag));
        row.sort_by_key(|&(c, _)| c);
        let mut last: Option<usize> = None;
        for &(c, v) in &row {
            if last == Some(c) {
                *vals.last_mut().expect("entry pushed") += v;
            } else {
                cols.push(c);
                vals.push(v);
                last = Some(c);
            }
        }
        row_offsets.push(cols.len());
    }
    if let Some((cell, diagonal)) = worst {
        return Err(Error::CflViolation { dt, cell, diagonal });
    }

    let mut counts = vec![0usize; n];
    for &c in &cols {
        counts[c] += 1;
    }
    let mut in_offsets = vec![0usize; n + 1];
    for c in 0..n {
        in_offsets[c + 1] = in_offsets[c] + counts[c];
    }
    let mut fill = in_offsets[..n].to_vec();
    let mut in_rows = vec![0usize; cols.len()];
    let mut in_vals = vec![0.0; cols.len()];
    for r in 0..n {
        for e in row_offsets[r]..row_offsets[r + 1] {
            let c = cols[e];
            in_rows[fill[c]] = r;
            in_vals[fill[c]] = vals[e];
            fill[c] += 1;
        }
    }

    Ok(TransitionOperator {
        grid: grid.clone(),
        dt,
        row_offsets,
        cols,
        vals,
        in_offsets,
        in_rows,
        in_vals,
        mass_conserving,
    })
}

impl TransitionOperator {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn num_cells(&self) -> usize {
        self.grid.num_cells()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// False iff some Dirichlet face carries outflow.
    pub fn mass_conserving(&self) -> bool {
        self.mass_conserving
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_offsets[r], self.row_offsets[r + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |i| vals[i])
    }

    /// Iterates `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.num_cells()).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    /// `x ↦ x S` for a row vector of masses (or averages; the grid is uniform).
    ///
    /// Each output entry is summed over its sources in ascending order, so the
    /// result is identical for any thread count.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.num_cells(), "vector length must match cell count");
        let mut out = vec![0.0; x.len()];
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(chunk, slot)| {
            let base = chunk * CHUNK;
            for (i, o) in slot.iter_mut().enumerate() {
                let j = base + i;
                let (a, b) = (self.in_offsets[j], self.in_offsets[j + 1]);
                let mut acc = 0.0;
                for e in a..b {
                    acc += x[self.in_rows[e]] * self.in_vals[e];
                }
                *o = acc;
            }
        });
        out
    }

    /// One time step.
    pub fn step(&self, density: &Density) -> Result<Density> {
        self.check_grid(density)?;
        Ok(Density::from_raw(self.grid.clone(), self.apply(density.values())))
    }

    /// Completed steps by time `t`: `floor(t / dt)`, treating values within
    /// `1e-9` of the next integer as reaching it.
    pub fn steps_until(&self, t: f64) -> u64 {
        if t <= 0.0 {
            return 0;
        }
        (t / self.dt + 1e-9).floor() as u64
    }

    /// `S_h(t) f`: applies `steps_until(t)` steps.
    pub fn evolve(&self, density: &Density, t: f64) -> Result<Density> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("evolution time must be non-negative, got {t}")));
        }
        self.check_grid(density)?;
        let mut x = density.values().to_vec();
        for _ in 0..self.steps_until(t) {
            x = self.apply(&x);
        }
        Ok(Density::from_raw(self.grid.clone(), x))
    }

    fn check_grid(&self, density: &Density) -> Result<()> {
        if density.grid().same_mesh(&self.grid) {
            Ok(())
        } else {
            Err(Error::IncompatibleGrids(format!(
                "density on {:?} cells, operator on {:?}",
                density.grid().counts(),
                self.grid.counts()
            )))
        }
    }

    pub fn verify_markov(&self, tol: f64) -> MarkovReport {
        let mut min_entry = f64::INFINITY;
        let mut max_row_sum_err = 0.0f64;
        for r in 0..self.num_cells() {
            let (_, vals) = self.row(r);
            let mut sum = 0.0;
            for &v in vals {
                min_entry = min_entry.min(v);
                sum += v;
            }
            max_row_sum_err = max_row_sum_err.max((sum - 1.0).abs());
        }
        MarkovReport {
            min_entry,
            max_row_sum_err,
            is_markov: min_entry >= -tol && max_row_sum_err <= tol,
        }
    }

    /// Left fixed vector by power iteration from the uniform density.
    ///
    /// Stops when successive iterates differ by less than `tol` in L¹.
    /// Periodic or reducible chains may fail to settle; the last iterate is
    /// returned inside [`Error::NoConvergence`].
    pub fn stationary(&self, tol: f64, max_iter: usize) -> Result<Density> {
        if !self.mass_conserving {
            return Err(Error::NotMassConserving);
        }
        let uniform = Density::uniform(self.grid.clone());
        let vol = self.grid.cell_volume();
        let mut x = uniform.masses();
        let mut residual = f64::INFINITY;
        for _ in 0..max_iter {
            let next = self.apply(&x);
            residual = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
            x = next;
            if residual < tol {
                let mass: f64 = x.iter().sum();
                let values = x.iter().map(|m| m / (mass * vol)).collect();
                return Ok(Density::from_raw(self.grid.clone(), values));
            }
        }
        let mass: f64 = x.iter().sum();
        let values = x.iter().map(|m| m / (mass * vol)).collect();
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual,
            last: Box::new(Density::from_raw(self.grid.clone(), values)),
        })
    }

    /// Writes `# cells=<n> dt=<dt>` followed by sorted `row col value` lines.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# cells={} dt={}", self.num_cells(), crate::io::fmt_real(self.dt))?;
        for (r, c, v) in self.triplets() {
            writeln!(w, "{r} {c} {}", crate::io::fmt_real(v))?;
        }
        Ok(())
    }
}

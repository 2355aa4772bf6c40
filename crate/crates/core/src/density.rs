//! Cell-averaged densities on a [`Grid`].
//!
//! A [`Density`] stores one average `p_K` per cell. Its mass is
//! `Σ_K |K| p_K`. All reductions run sequentially in canonical cell order so
//! results do not depend on the thread count.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{BoxDomain, Grid, MAX_DIM};
use crate::quadrature::Quadrature;

#[derive(Clone)]
pub struct Density {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl std::fmt::Debug for Density {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Density")
            .field("n", &self.grid.counts())
            .field("mass", &self.mass())
            .field("min", &self.min_value())
            .finish()
    }
}

impl PartialEq for Density {
    fn eq(&self, other: &Self) -> bool {
        self.grid.same_mesh(&other.grid) && self.values == other.values
    }
}

impl Density {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(Error::DimensionMismatch {
                expected: grid.num_cells(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("density value in cell {i}")));
        }
        Ok(Self { grid, values })
    }

    /// The normalized uniform density `1/|Ω|`.
    pub fn uniform(grid: Arc<Grid>) -> Self {
        let v = 1.0 / grid.domain().volume();
        let values = vec![v; grid.num_cells()];
        Self { grid, values }
    }

    /// All mass in one cell.
    pub fn point_mass(grid: Arc<Grid>, cell: usize) -> Result<Self> {
        let n = grid.num_cells();
        if cell >= n {
            return Err(Error::IndexOutOfRange { index: cell, len: n });
        }
        let mut values = vec![0.0; n];
        values[cell] = 1.0 / grid.cell_volume();
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.num_cells());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Per-cell masses `|K| p_K`.
    pub fn masses(&self) -> Vec<f64> {
        let vol = self.grid.cell_volume();
        self.values.iter().map(|p| p * vol).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_raw(self.grid.clone(), self.values.iter().map(|v| v * factor).collect())
    }

    /// Piecewise-constant prolongation onto an integer refinement of this grid.
    pub fn refine(&self, fine: &Arc<Grid>) -> Result<Density> {
        let ratio = self.grid.refinement_ratio(fine).ok_or_else(|| {
            Error::IncompatibleGrids(format!(
                "{:?} is not an integer refinement of {:?}",
                fine.counts(),
                self.grid.counts()
            ))
        })?;
        let d = fine.dim();
        let values = (0..fine.num_cells())
            .map(|c| {
                let mi = fine.multi_index(c);
                let mut coarse = [0usize; MAX_DIM];
                for a in 0..d {
                    coarse[a] = mi[a] / ratio[a];
                }
                let idx = self.grid.index_of(&coarse[..d]).expect("coarse index in range");
                self.values[idx]
            })
            .collect();
        Ok(Density::from_raw(fine.clone(), values))
    }
}

/// Cell averages `p_K = (1/|K|) ∫_K pdf` by tensor quadrature.
///
/// The result is not normalized; mass outside the box is lost.
pub fn project<F>(pdf: F, grid: &Arc<Grid>, quadrature: Quadrature) -> Result<Density>
where
    F: Fn(&[f64]) -> f64,
{
    let d = grid.dim();
    let (nodes, weights) = quadrature.rule()?;
    let k = nodes.len();
    let total = k.pow(d as u32);
    let h = grid.spacing();
    let mut values = Vec::with_capacity(grid.num_cells());
    for cell in 0..grid.num_cells() {
        let centre = grid.cell_center(cell);
        let mut x = centre;
        let mut acc = 0.0;
        for flat in 0..total {
            let mut w = 1.0;
            let mut rest = flat;
            for a in 0..d {
                let q = rest % k;
                rest /= k;
                x[a] = centre[a] + 0.5 * h[a] * nodes[q];
                w *= 0.5 * weights[q];
            }
            acc += w * pdf(&x[..d]);
        }
        if !acc.is_finite() {
            return Err(Error::NonFinite(format!("cell average of cell {cell}")));
        }
        if acc < 0.0 {
            return Err(Error::NegativeCellAverage { cell, value: acc });
        }
        values.push(acc);
    }
    Ok(Density::from_raw(grid.clone(), values))
}

pub fn normalize(density: &Density) -> Result<Density> {
    let m = density.mass();
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::ZeroMass);
    }
    Ok(density.scaled(1.0 / m))
}

/// `‖a − b‖_{L¹}`, prolonging the coarser density when the grids differ by
/// an integer refinement.
pub fn l1_distance(a: &Density, b: &Density) -> Result<f64> {
    let (a, b) = if a.grid.same_mesh(&b.grid) {
        (a.clone(), b.clone())
    } else if a.grid.refinement_ratio(&b.grid).is_some() {
        (a.refine(&b.grid)?, b.clone())
    } else if b.grid.refinement_ratio(&a.grid).is_some() {
        (a.clone(), b.refine(&a.grid)?)
    } else {
        return Err(Error::IncompatibleGrids(format!(
            "{:?} and {:?} are not nested",
            a.grid.counts(),
            b.grid.counts()
        )));
    };
    let sum: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum * a.grid.cell_volume())
}

/// `Σ_K |K| p_K g(x_K)` with `g` evaluated at cell midpoints.
pub fn expectation<G>(density: &Density, g: G) -> Result<f64>
where
    G: Fn(&[f64]) -> f64,
{
    let grid = &density.grid;
    let d = grid.dim();
    let mut acc = 0.0;
    for (cell, &p) in density.values.iter().enumerate() {
        let x = grid.cell_center(cell);
        let gx = g(&x[..d]);
        if !gx.is_finite() {
            return Err(Error::NonFinite(format!("g at midpoint of cell {cell}")));
        }
        acc += p * gx;
    }
    Ok(acc * grid.cell_volume())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    /// Row-major `d × d`.
    pub covariance: Vec<f64>,
}

impl Moments {
    pub fn std(&self) -> Vec<f64> {
        let d = self.mean.len();
        (0..d).map(|i| self.covariance[i * d + i].max(0.0).sqrt()).collect()
    }
}

/// Mean and covariance of the piecewise-constant reconstruction.
///
/// Second moments include the within-cell spread, so a single occupied cell
/// has variance `h_i² / 12` along axis `i`.
pub fn moments(density: &Density) -> Moments {
    let grid = &density.grid;
    let d = grid.dim();
    let h = grid.spacing();
    let mut mean = vec![0.0; d];
    let mut second = vec![0.0; d * d];
    let mut mass = 0.0;
    for (cell, &p) in density.values.iter().enumerate() {
        let x = grid.cell_center(cell);
        mass += p;
        for i in 0..d {
            mean[i] += p * x[i];
            for j in 0..d {
                second[i * d + j] += p * x[i] * x[j];
            }
        }
    }
    let vol = grid.cell_volume();
    let mass = mass * vol;
    for m in &mut mean {
        *m *= vol;
    }
    let mut covariance = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut s = second[i * d + j] * vol;
            if i == j {
                s += mass * h[i] * h[i] / 12.0;
            }
            covariance[i * d + j] = s - mean[i] * mean[j];
        }
    }
    Moments { mean, covariance }
}

/// Integrates out every axis except `axis`.
pub fn marginal(density: &Density, axis: usize) -> Result<Density> {
    let grid = &density.grid;
    let d = grid.dim();
    if axis >= d {
        return Err(Error::IndexOutOfRange { index: axis, len: d });
    }
    let dom = grid.domain();
    let line = Grid::new(
        BoxDomain::new(vec![dom.lower()[axis]], vec![dom.upper()[axis]])?,
        vec![grid.counts()[axis]],
        vec![grid.boundary_conditions()[axis]],
    )?;
    let transverse: f64 = (0..d).filter(|&j| j != axis).map(|j| grid.spacing()[j]).product();
    let mut values = vec![0.0; grid.counts()[axis]];
    for (cell, &p) in density.values.iter().enumerate() {
        values[grid.multi_index(cell)[axis]] += p;
    }
    for v in &mut values {
        *v *= transverse;
    }
    Ok(Density::from_raw(Arc::new(line), values))
}

/// Largest `|p(x) − p(−x)|` over cells, pairing each cell with its mirror
/// image through the box centre.
pub fn point_reflection_defect(density: &Density) -> f64 {
    let grid = &density.grid;
    let d = grid.dim();
    let n = grid.counts();
    let mut worst = 0.0f64;
    for (cell, &p) in density.values.iter().enumerate() {
        let mi = grid.multi_index(cell);
        let mut mirror = [0usize; MAX_DIM];
        for a in 0..d {
            mirror[a] = n[a] - 1 - mi[a];
        }
        let q = density.values[grid.index_of(&mirror[..d]).expect("mirror in range")];
        worst = worst.max((p - q).abs());
    }
    worst
}

/// Counts modes of a 1D density.
///
/// Runs of equal values are merged into plateaus. A plateau higher than both
/// neighbours is a mode when, on each side, the lowest value before the line
/// climbs back to its height (or ends) lies at least `min_prominence × max`
/// below it. An empty side counts as satisfied, so a constant line has one
/// mode. Periodic lines are rotated to start at their global minimum first.
pub fn count_modes(marginal: &Density, min_prominence: f64) -> usize {
    let vals = marginal.values();
    if vals.is_empty() {
        return 0;
    }
    let periodic = marginal.grid.dim() == 1
        && marginal.grid.boundary_conditions()[0] == crate::grid::BoundaryCondition::Periodic;
    let seq: Vec<f64> = if periodic {
        let start = vals
            .iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v < vals[best] { i } else { best });
        vals[start..].iter().chain(&vals[..start]).copied().collect()
    } else {
        vals.to_vec()
    };
    count_modes_in(&seq, min_prominence)
}

fn count_modes_in(seq: &[f64], min_prominence: f64) -> usize {
    let mut runs: Vec<f64> = Vec::new();
    for &v in seq {
        if runs.last() != Some(&v) {
            runs.push(v);
        }
    }
    let peak = runs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = min_prominence * peak;
    let n = runs.len();
    let mut modes = 0;
    for i in 0..n {
        let left_lower = i == 0 || runs[i - 1] < runs[i];
        let right_lower = i + 1 == n || runs[i + 1] < runs[i];
        if !(left_lower && right_lower) {
            continue;
        }
        let top = runs[i];
        // deepest point before reaching ground at least as high as this plateau
        let descent = |range: &mut dyn Iterator<Item = usize>| {
            let mut low: Option<f64> = None;
            for j in range {
                if runs[j] >= top {
                    break;
                }
                low = Some(low.map_or(runs[j], |l: f64| l.min(runs[j])));
            }
            low.map_or(true, |l| top - l >= threshold)
        };
        if descent(&mut (0..i).rev()) && descent(&mut (i + 1..n)) {
            modes += 1;
        }
    }
    modes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundaryCondition::*;
    use std::f64::consts::PI;

    fn square(n: usize) -> Arc<Grid> {
        Arc::new(Grid::new(BoxDomain::cube(2, -PI, PI).unwrap(), vec![n, n], vec![Periodic, Neumann]).unwrap())
    }

    fn line(n: usize, bc: crate::grid::BoundaryCondition) -> Arc<Grid> {
        Arc::new(Grid::new(BoxDomain::cube(1, 0.0, 1.0).unwrap(), vec![n], vec![bc]).unwrap())
    }

    fn gaussian(mean: [f64; 2], var: f64) -> impl Fn(&[f64]) -> f64 {
        move |x| {
            let r2 = (x[0] - mean[0]).powi(2) + (x[1] - mean[1]).powi(2);
            (-r2 / (2.0 * var)).exp() / (2.0 * PI * var)
        }
    }

    #[test]
    fn constant_pdf_projects_exactly() {
        let g = square(10);
        let c = 1.0 / (4.0 * PI * PI);
        for q in [Quadrature::Midpoint, Quadrature::Gauss(3)] {
            let p = project(|_| c, &g, q).unwrap();
            assert!(p.values().iter().all(|&v| (v - c).abs() < 1e-16));
            assert!((p.mass() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn gauss2_is_exact_for_linear_pdf() {
        let g = line(7, Dirichlet);
        let p = project(|x| 0.25 + 1.5 * x[0], &g, Quadrature::Gauss(2)).unwrap();
        let h = 1.0 / 7.0;
        for (i, &v) in p.values().iter().enumerate() {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            let exact = (0.25 * (b - a) + 0.75 * (b * b - a * a)) / h;
            assert!((v - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn negative_pdf_is_rejected() {
        let g = line(4, Periodic);
        assert!(matches!(
            project(|x| x[0] - 0.5, &g, Quadrature::Midpoint),
            Err(Error::NegativeCellAverage { cell: 0, .. })
        ));
        assert!(matches!(
            project(|_| f64::NAN, &g, Quadrature::Midpoint),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn normalization() {
        let g = line(4, Periodic);
        let p = Density::new(g.clone(), vec![2.0; 4]).unwrap();
        assert_eq!(normalize(&p).unwrap().values(), &[1.0; 4]);
        let u = Density::uniform(g.clone());
        let n = normalize(&u).unwrap();
        for (a, b) in n.values().iter().zip(u.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(normalize(&Density::new(g, vec![0.0; 4]).unwrap()), Err(Error::ZeroMass)));
    }

    #[test]
    fn truncated_prior_mass() {
        let g = square(50);
        let p = project(gaussian([0.0, 0.0], 0.64), &g, Quadrature::Midpoint).unwrap();
        let before = p.mass();
        // exp(-π²/1.28) tails on each side
        assert!(before < 1.0 && before > 0.99);
        let n = normalize(&p).unwrap();
        assert!((n.mass() - 1.0).abs() < 1e-14);
        let m = moments(&n);
        let h = g.spacing()[0];
        assert!(m.mean[0].abs() < 2.0 * h && m.mean[1].abs() < 2.0 * h);
    }

    #[test]
    fn l1_basics() {
        let g = square(8);
        let u = Density::uniform(g.clone());
        assert_eq!(l1_distance(&u, &u).unwrap(), 0.0);
        let z = Density::new(g.clone(), vec![0.0; 64]).unwrap();
        assert!((l1_distance(&u, &z).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn prolongation_is_exact() {
        let coarse = square(6);
        let fine = square(12);
        let p = normalize(&project(gaussian([1.0, -0.5], 0.5), &coarse, Quadrature::Midpoint).unwrap()).unwrap();
        let r = p.refine(&fine).unwrap();
        assert_eq!(l1_distance(&p, &r).unwrap(), 0.0);
        assert_eq!(l1_distance(&r, &p).unwrap(), 0.0);
        assert!((r.mass() - p.mass()).abs() < 1e-15);
        assert!(matches!(l1_distance(&p, &Density::uniform(square(9))), Err(Error::IncompatibleGrids(_))));
    }

    #[test]
    fn expectations() {
        let g = square(40);
        let u = Density::uniform(g.clone());
        assert!((expectation(&u, |_| 1.0).unwrap() - 1.0).abs() < 1e-12);
        let e = expectation(&u, |x| x[0] * x[0]).unwrap();
        let h = g.spacing()[0];
        // midpoint rule misses h²/12
        assert!((e - PI * PI / 3.0).abs() < h * h);
        assert!((e + h * h / 12.0 - PI * PI / 3.0).abs() < 1e-12);

        let sym = normalize(&project(gaussian([0.0, 0.0], 0.3), &g, Quadrature::Midpoint).unwrap()).unwrap();
        assert!(expectation(&sym, |x| x[0]).unwrap().abs() < 1e-12);
        assert!(expectation(&u, |x| 1.0 / x[0].signum().max(0.0)).is_err());
    }

    #[test]
    fn point_mass_moments() {
        let g = square(10);
        let c = g.index_of(&[3, 7]).unwrap();
        let p = Density::point_mass(g.clone(), c).unwrap();
        let m = moments(&p);
        let x = g.cell_center(c);
        let h = g.spacing()[0];
        assert!((m.mean[0] - x[0]).abs() < 1e-14 && (m.mean[1] - x[1]).abs() < 1e-14);
        assert!((m.covariance[0] - h * h / 12.0).abs() < 1e-13);
        assert!((m.covariance[3] - h * h / 12.0).abs() < 1e-13);
        assert!(m.covariance[1].abs() < 1e-13);
    }

    #[test]
    fn bimodal_mean_is_zero() {
        let g = square(40);
        let a = gaussian([1.5, 0.5], 0.2);
        let b = gaussian([-1.5, -0.5], 0.2);
        let p = normalize(&project(|x| a(x) + b(x), &g, Quadrature::Midpoint).unwrap()).unwrap();
        let m = moments(&p);
        assert!(m.mean[0].abs() < 1e-12 && m.mean[1].abs() < 1e-12);
        assert_eq!(count_modes(&marginal(&p, 0).unwrap(), 0.1), 2);
    }

    #[test]
    fn marginals() {
        let g = square(16);
        let u = Density::uniform(g.clone());
        let m = marginal(&u, 1).unwrap();
        assert!(m.values().iter().all(|&v| (v - 1.0 / (2.0 * PI)).abs() < 1e-15));

        let f = |t: f64| (-(t - 0.3) * (t - 0.3)).exp();
        let gg = |t: f64| 1.0 + 0.5 * t.cos();
        let p = project(|x| f(x[0]) * gg(x[1]), &g, Quadrature::Midpoint).unwrap();
        let line_grid = Arc::new(Grid::new(BoxDomain::cube(1, -PI, PI).unwrap(), vec![16], vec![Periodic]).unwrap());
        let fx = project(|x| f(x[0]), &line_grid, Quadrature::Midpoint).unwrap();
        let norm_g: f64 = (0..16).map(|j| gg(g.cell_center(j * 16)[1])).sum::<f64>() * g.spacing()[1];
        let m0 = marginal(&p, 0).unwrap();
        for (a, b) in m0.values().iter().zip(fx.values()) {
            assert!((a - b * norm_g).abs() < 1e-14 * b.abs().max(1.0));
        }
        assert!((m0.mass() - p.mass()).abs() < 1e-13);
        assert!(marginal(&p, 2).is_err());
    }

    #[test]
    fn mode_counting() {
        let g = line(100, Dirichlet);
        let bump = |c: f64| move |x: &[f64]| (-(x[0] - c).powi(2) / 0.005).exp();
        let one = project(bump(0.5), &g, Quadrature::Midpoint).unwrap();
        assert_eq!(count_modes(&one, 0.1), 1);
        let (a, b) = (bump(0.25), bump(0.75));
        let two = project(|x| a(x) + b(x), &g, Quadrature::Midpoint).unwrap();
        assert_eq!(count_modes(&two, 0.1), 2);
        assert_eq!(count_modes(&Density::uniform(g.clone()), 0.1), 1);

        // small ripple on one bump is not a mode
        let rippled = project(|x| a(x) + 0.01 * (60.0 * x[0]).sin().abs(), &g, Quadrature::Midpoint).unwrap();
        assert_eq!(count_modes(&rippled, 0.1), 1);

        // a bump straddling the periodic seam counts once
        let ring = line(100, Periodic);
        let (c, d) = (bump(0.0), bump(1.0));
        let seam = project(|x| c(x) + d(x), &ring, Quadrature::Midpoint).unwrap();
        assert_eq!(count_modes(&seam, 0.1), 1);
    }
}

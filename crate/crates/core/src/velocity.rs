//! Velocity fields and face fluxes `v_KL = ∫_E v·n dS`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{BoxDomain, Grid, MAX_DIM};
use crate::quadrature::Quadrature;

type EvalFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type BoundFn = dyn Fn(&BoxDomain) -> f64 + Send + Sync;

/// An autonomous vector field `x ↦ v(x)`.
///
/// `divergence_free` is declared by the constructor, never inferred.
#[derive(Clone)]
pub struct VelocityField {
    name: String,
    dim: usize,
    eval: Arc<EvalFn>,
    divergence_free: bool,
    sup_norm_bound: Option<f64>,
    analytic_bound: Option<Arc<BoundFn>>,
}

impl fmt::Debug for VelocityField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VelocityField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("divergence_free", &self.divergence_free)
            .field("sup_norm_bound", &self.sup_norm_bound)
            .finish()
    }
}

impl VelocityField {
    pub fn new<F>(name: impl Into<String>, dim: usize, divergence_free: bool, eval: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            eval: Arc::new(eval),
            divergence_free,
            sup_norm_bound: None,
            analytic_bound: None,
        }
    }

    /// Fixes the speed bound used by [`VelocityField::speed_bound`].
    pub fn with_sup_norm_bound(mut self, bound: f64) -> Self {
        self.sup_norm_bound = Some(bound);
        self
    }

    fn with_analytic_bound<F>(mut self, f: F) -> Self
    where
        F: Fn(&BoxDomain) -> f64 + Send + Sync + 'static,
    {
        self.analytic_bound = Some(Arc::new(f));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn divergence_free(&self) -> bool {
        self.divergence_free
    }

    pub fn sup_norm_bound(&self) -> Option<f64> {
        self.sup_norm_bound
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.eval)(x, out)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.eval)(x, &mut out);
        out
    }

    /// Upper bound on `Σ_i sup |v_i|` over the box.
    ///
    /// On a uniform grid every cell then satisfies
    /// `Σ_L (v_KL)_+ ≤ speed_bound · |K| / h_min`.
    /// Uses, in order: an explicit bound, a closed form for built-in fields,
    /// or the maximum over cell midpoints times 1.1.
    pub fn speed_bound(&self, grid: &Grid) -> f64 {
        if let Some(b) = self.sup_norm_bound {
            return b;
        }
        if let Some(f) = &self.analytic_bound {
            return f(grid.domain());
        }
        let d = self.dim;
        let mut sup = [0.0f64; MAX_DIM];
        let mut v = [0.0; MAX_DIM];
        for c in 0..grid.num_cells() {
            let x = grid.cell_center(c);
            self.eval_into(&x[..d], &mut v[..d]);
            for a in 0..d {
                sup[a] = sup[a].max(v[a].abs());
            }
        }
        1.1 * sup[..d].iter().sum::<f64>()
    }

    /// Parses a built-in field name: `pendulum`, `pendulum:<g/l>`,
    /// `constant:<c1,c2,...>`, `rotation`, or `zero:<d>`.
    pub fn from_name(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (head, arg) = match spec.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (spec, None),
        };
        match (head, arg) {
            ("pendulum", None) => pendulum_field(1.0),
            ("pendulum", Some(a)) => pendulum_field(crate::parse_real(a)?),
            ("rotation", None) => Ok(rotation_field()),
            ("constant", Some(a)) => {
                let c = a
                    .split(',')
                    .map(crate::parse_real)
                    .collect::<Result<Vec<_>>>()?;
                constant_field(c)
            }
            ("zero", Some(a)) => {
                let d: usize = a
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad dimension in '{spec}'")))?;
                constant_field(vec![0.0; d])
            }
            _ => Err(Error::Parse(format!("unknown velocity field '{spec}'"))),
        }
    }
}

/// Simple pendulum `v(x) = (x₂, −(g/l) sin x₁)`.
pub fn pendulum_field(g_over_l: f64) -> Result<VelocityField> {
    if !(g_over_l > 0.0 && g_over_l.is_finite()) {
        return Err(Error::InvalidArgument(format!("g/l must be positive, got {g_over_l}")));
    }
    let name = if g_over_l == 1.0 {
        "pendulum".to_string()
    } else {
        format!("pendulum:{g_over_l}")
    };
    Ok(VelocityField::new(name, 2, true, move |x, v| {
        v[0] = x[1];
        v[1] = -g_over_l * x[0].sin();
    })
    .with_analytic_bound(move |dom| {
        let vmax = dom.lower()[1].abs().max(dom.upper()[1].abs());
        vmax + g_over_l * max_abs_sin(dom.lower()[0], dom.upper()[0])
    }))
}

fn max_abs_sin(lo: f64, hi: f64) -> f64 {
    use std::f64::consts::{FRAC_PI_2, PI};
    // any odd multiple of π/2 inside [lo, hi] attains |sin| = 1
    let first = ((lo - FRAC_PI_2) / PI).ceil();
    if FRAC_PI_2 + first * PI <= hi {
        1.0
    } else {
        lo.sin().abs().max(hi.sin().abs())
    }
}

/// Constant field; divergence free.
pub fn constant_field(c: Vec<f64>) -> Result<VelocityField> {
    if c.is_empty() || c.len() > MAX_DIM {
        return Err(Error::UnsupportedDimension(c.len()));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("constant field component".into()));
    }
    let name = format!(
        "constant:{}",
        c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    );
    let bound: f64 = c.iter().map(|v| v.abs()).sum();
    let d = c.len();
    Ok(VelocityField::new(name, d, true, move |_, v| v.copy_from_slice(&c)).with_sup_norm_bound(bound))
}

/// Rigid rotation `v(x) = (−x₂, x₁)`.
pub fn rotation_field() -> VelocityField {
    VelocityField::new("rotation", 2, true, |x, v| {
        v[0] = -x[1];
        v[1] = x[0];
    })
    .with_analytic_bound(|dom| {
        let m = |a: usize| dom.lower()[a].abs().max(dom.upper()[a].abs());
        m(0) + m(1)
    })
}

/// One signed flux per grid edge, oriented along the edge's `normal_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFluxes {
    flux: Vec<f64>,
    quadrature: Quadrature,
}

impl EdgeFluxes {
    pub fn from_values(flux: Vec<f64>, quadrature: Quadrature) -> Self {
        Self { flux, quadrature }
    }

    pub fn values(&self) -> &[f64] {
        &self.flux
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    pub fn len(&self) -> usize {
        self.flux.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flux.is_empty()
    }

    /// Flux through `edge` seen from the side with the given orientation
    /// (`+1` for `cell_a`, `-1` for `cell_b`).
    pub fn outward(&self, edge: usize, orientation: f64) -> f64 {
        orientation * self.flux[edge]
    }
}

/// Integrates `v·n` over every face of `grid`.
pub fn compute_fluxes(field: &VelocityField, grid: &Grid, quadrature: Quadrature) -> Result<EdgeFluxes> {
    let d = grid.dim();
    if field.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: field.dim(),
        });
    }
    let (nodes, weights) = quadrature.rule()?;
    let h = grid.spacing();
    let flux: Vec<f64> = grid
        .edges()
        .par_iter()
        .map(|e| {
            let transverse: Vec<usize> = (0..d).filter(|&j| j != e.axis).collect();
            let k = nodes.len();
            let total = k.pow(transverse.len() as u32);
            let mut x = e.midpoint;
            let mut v = [0.0; MAX_DIM];
            let mut acc = 0.0;
            for flat in 0..total {
                let mut w = 1.0;
                let mut rest = flat;
                for &j in &transverse {
                    let q = rest % k;
                    rest /= k;
                    x[j] = e.midpoint[j] + 0.5 * h[j] * nodes[q];
                    w *= 0.5 * weights[q];
                }
                field.eval_into(&x[..d], &mut v[..d]);
                acc += w * v[e.axis];
            }
            acc * f64::from(e.normal_a) * e.measure
        })
        .collect();
    if let Some(i) = flux.iter().position(|f| !f.is_finite()) {
        return Err(Error::NonFinite(format!("flux through edge {i}")));
    }
    Ok(EdgeFluxes { flux, quadrature })
}

/// Net outward flux `Σ_L v_KL` per cell.
pub fn discrete_divergence(fluxes: &EdgeFluxes, grid: &Grid) -> Result<Vec<f64>> {
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
                .map(|n| fluxes.outward(n.edge, n.orientation))
                .sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundaryCondition::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn pendulum_grid(n: usize) -> Grid {
        Grid::new(BoxDomain::cube(2, -PI, PI).unwrap(), vec![n, n], vec![Periodic, Neumann]).unwrap()
    }

    #[test]
    fn pendulum_values() {
        let f = pendulum_field(1.0).unwrap();
        assert_eq!(f.eval(&[0.0, 0.0]), vec![0.0, -0.0]);
        let v = f.eval(&[FRAC_PI_2, 1.0]);
        assert_eq!(v, vec![1.0, -1.0]);
        let v = f.eval(&[-FRAC_PI_2, 2.0]);
        assert_eq!(v, vec![2.0, 1.0]);
        assert!(f.divergence_free());
        assert!(pendulum_field(0.0).is_err());
    }

    #[test]
    fn pendulum_speed_bound_is_pi_plus_one() {
        let f = pendulum_field(1.0).unwrap();
        assert!((f.speed_bound(&pendulum_grid(10)) - (PI + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn pendulum_flux_on_axis0_face() {
        // x₁ faces at 0, x₂ cell centres at 2/3, 1, 4/3
        let g = Grid::new(
            BoxDomain::new(vec![-1.0, 0.5], vec![1.0, 1.5]).unwrap(),
            vec![2, 3],
            vec![Periodic, Neumann],
        )
        .unwrap();
        let fl = compute_fluxes(&pendulum_field(1.0).unwrap(), &g, Quadrature::Midpoint).unwrap();
        let h = g.spacing()[1];
        let e = g
            .edges()
            .iter()
            .position(|e| e.axis == 0 && e.midpoint[0] == 0.0 && (e.midpoint[1] - 1.0).abs() < 1e-15)
            .unwrap();
        assert!((fl.values()[e] - h).abs() < 1e-15);
    }

    #[test]
    fn zero_and_constant_fields() {
        let g = pendulum_grid(6);
        let fl = compute_fluxes(&constant_field(vec![0.0, 0.0]).unwrap(), &g, Quadrature::Midpoint).unwrap();
        assert!(fl.values().iter().all(|&f| f == 0.0));
        assert!(discrete_divergence(&fl, &g).unwrap().iter().all(|&d| d == 0.0));

        let ring = Grid::new(BoxDomain::cube(1, 0.0, 1.0).unwrap(), vec![5], vec![Periodic]).unwrap();
        let fl = compute_fluxes(&constant_field(vec![0.7]).unwrap(), &ring, Quadrature::Midpoint).unwrap();
        assert!(fl.values().iter().all(|&f| f == 0.7));
        assert!(discrete_divergence(&fl, &ring).unwrap().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn antisymmetry_by_orientation() {
        let g = pendulum_grid(8);
        let fl = compute_fluxes(&pendulum_field(1.0).unwrap(), &g, Quadrature::Midpoint).unwrap();
        for c in 0..g.num_cells() {
            for n in g.neighbors(c).unwrap() {
                let l = n.cell.unwrap();
                let back = g.neighbors(l).unwrap().iter().find(|m| m.edge == n.edge).unwrap();
                assert_eq!(fl.outward(n.edge, n.orientation), -fl.outward(back.edge, back.orientation));
            }
        }
    }

    #[test]
    fn pendulum_divergence_interior_vs_neumann_rows() {
        let n = 50;
        let g = pendulum_grid(n);
        let h = g.spacing()[0];
        let fl = compute_fluxes(&pendulum_field(1.0).unwrap(), &g, Quadrature::Midpoint).unwrap();
        let div = discrete_divergence(&fl, &g).unwrap();
        for c in 0..g.num_cells() {
            let j = g.multi_index(c)[1];
            let x1 = g.cell_center(c)[0];
            if j == 0 {
                // lower wall suppressed: only the upper face remains
                assert!((div[c] - (-x1.sin() * h)).abs() < 1e-12 * h);
            } else if j == n - 1 {
                assert!((div[c] - (x1.sin() * h)).abs() < 1e-12 * h);
            } else {
                assert!(div[c].abs() < 1e-12 * h, "cell {c}: {}", div[c]);
            }
        }

        // with both axes periodic no face is suppressed and the divergence vanishes
        let gp = Grid::new(BoxDomain::cube(2, -PI, PI).unwrap(), vec![n, n], vec![Periodic, Periodic]).unwrap();
        let fl = compute_fluxes(&pendulum_field(1.0).unwrap(), &gp, Quadrature::Midpoint).unwrap();
        let max = discrete_divergence(&fl, &gp).unwrap().iter().fold(0.0f64, |m, d| m.max(d.abs()));
        assert!(max < 1e-12 * h, "{max}");
    }

    #[test]
    fn gauss_matches_midpoint_for_affine_normal_component() {
        let f = VelocityField::new("affine", 2, false, |x, v| {
            v[0] = 0.3 + 2.0 * x[1] - x[0];
            v[1] = -1.0 + 0.5 * x[0] + 4.0 * x[1];
        });
        let g = Grid::new(BoxDomain::cube(2, -1.0, 2.0).unwrap(), vec![7, 5], vec![Dirichlet, Periodic]).unwrap();
        let a = compute_fluxes(&f, &g, Quadrature::Midpoint).unwrap();
        let b = compute_fluxes(&f, &g, Quadrature::Gauss(2)).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-13 * x.abs().max(1e-300) + 1e-15);
        }
    }

    #[test]
    fn gauss_integrates_curved_faces() {
        // v₀ = x₁² on the unit square: ∫ over face [a, a+h] is exact for k ≥ 2
        let f = VelocityField::new("quad", 2, true, |x, v| {
            v[0] = x[1] * x[1];
            v[1] = 0.0;
        });
        let g = Grid::new(BoxDomain::cube(2, 0.0, 1.0).unwrap(), vec![4, 4], vec![Periodic, Periodic]).unwrap();
        let fl = compute_fluxes(&f, &g, Quadrature::Gauss(2)).unwrap();
        for (e, &v) in g.edges().iter().zip(fl.values()) {
            if e.axis == 0 {
                let a = e.midpoint[1] - 0.125;
                let b = a + 0.25;
                let exact = (b.powi(3) - a.powi(3)) / 3.0;
                assert!((v - exact).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn non_finite_field_is_rejected() {
        let f = VelocityField::new("bad", 1, false, |x, v| v[0] = 1.0 / x[0]);
        let g = Grid::new(BoxDomain::cube(1, -1.0, 1.0).unwrap(), vec![2], vec![Periodic]).unwrap();
        assert!(matches!(compute_fluxes(&f, &g, Quadrature::Midpoint), Err(Error::NonFinite(_))));
        let g3 = Grid::new(BoxDomain::cube(3, 0.0, 1.0).unwrap(), vec![2; 3], vec![Periodic; 3]).unwrap();
        assert!(compute_fluxes(&rotation_field(), &g3, Quadrature::Midpoint).is_err());
    }

    #[test]
    fn names() {
        assert_eq!(VelocityField::from_name("pendulum").unwrap().name(), "pendulum");
        let c = VelocityField::from_name("constant:1,-2").unwrap();
        assert_eq!(c.eval(&[0.0, 0.0]), vec![1.0, -2.0]);
        assert_eq!(VelocityField::from_name("rotation").unwrap().eval(&[1.0, 2.0]), vec![-2.0, 1.0]);
        assert_eq!(VelocityField::from_name("zero:3").unwrap().dim(), 3);
        assert!(VelocityField::from_name("lorenz").is_err());
    }
}

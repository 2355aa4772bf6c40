//! Grid-based sequential Bayesian filtering.
//!
//! The prediction step pushes the posterior through the transition operator;
//! the update step multiplies by the observation likelihood at cell
//! midpoints and renormalizes. Evidence is accumulated in log space.
//!
//! Observation and snapshot times are snapped to the nearest multiple of the
//! operator's time step, since the discrete evolution is piecewise constant
//! in time.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::density::{count_modes, marginal, moments, normalize, Density};
use crate::error::{Error, Result};
use crate::grid::{BoundaryCondition, Grid, MAX_DIM};
use crate::operator::TransitionOperator;
use crate::velocity::VelocityField;

/// Prominence used for the per-step mode count of the axis-0 marginal.
pub const MODE_PROMINENCE: f64 = 0.1;

/// Posterior mass tolerance.
pub const MASS_TOL: f64 = 1e-10;

/// Likelihood-weighted mass below this is treated as zero evidence.
const EVIDENCE_FLOOR: f64 = 1e-300;

type LogLikFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

/// `log ρ(z | x)`.
#[derive(Clone)]
pub struct ObservationModel {
    log_likelihood: Arc<LogLikFn>,
    description: String,
}

impl fmt::Debug for ObservationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObservationModel")
            .field("description", &self.description)
            .finish()
    }
}

impl ObservationModel {
    pub fn new<F>(description: impl Into<String>, log_likelihood: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            log_likelihood: Arc::new(log_likelihood),
            description: description.into(),
        }
    }

    pub fn log_likelihood(&self, z: &[f64], x: &[f64]) -> f64 {
        (self.log_likelihood)(z, x)
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

/// `z ~ N(|x₁|, σ²)`: carries no information about the sign of `x₁`.
pub fn gaussian_abs_position_model(sigma: f64) -> Result<ObservationModel> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let log_norm = (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
    Ok(ObservationModel::new(format!("gaussian |x1|, sigma={sigma}"), move |z, x| {
        let r = (z[0] - x[0].abs()) / sigma;
        -0.5 * r * r - log_norm
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub t: f64,
    pub z: Vec<f64>,
}

/// Observations at strictly increasing positive times.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationSequence {
    entries: Vec<Observation>,
}

impl ObservationSequence {
    pub fn new(entries: Vec<Observation>) -> Result<Self> {
        for (i, o) in entries.iter().enumerate() {
            if !(o.t > 0.0 && o.t.is_finite()) {
                return Err(Error::InvalidObservations(format!("time {} is not positive", o.t)));
            }
            if o.z.is_empty() || o.z.iter().any(|z| !z.is_finite()) {
                return Err(Error::InvalidObservations(format!("bad value at t = {}", o.t)));
            }
            if i > 0 && entries[i - 1].t >= o.t {
                return Err(Error::InvalidObservations(format!(
                    "times not strictly increasing: {} then {}",
                    entries[i - 1].t,
                    o.t
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_pairs(pairs: Vec<(f64, Vec<f64>)>) -> Result<Self> {
        Self::new(pairs.into_iter().map(|(t, z)| Observation { t, z }).collect())
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_pairs(&self) -> Vec<(f64, Vec<f64>)> {
        self.entries.iter().map(|o| (o.t, o.z.clone())).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord {
    pub t: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Modes of the axis-0 marginal at [`MODE_PROMINENCE`].
    pub mode_count: usize,
    pub log_evidence: f64,
}

#[derive(Debug, Clone)]
pub struct FilterState {
    posterior: Density,
    t0: f64,
    steps: u64,
    dt: Option<f64>,
    log_evidence: f64,
    history: Vec<HistoryRecord>,
}

impl FilterState {
    /// Starts a filter at `t0` from a normalized prior.
    pub fn new(prior: Density, t0: f64) -> Result<Self> {
        if (prior.mass() - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidArgument(format!(
                "prior mass must be 1, got {}",
                prior.mass()
            )));
        }
        let mut state = Self {
            posterior: prior,
            t0,
            steps: 0,
            dt: None,
            log_evidence: 0.0,
            history: Vec::new(),
        };
        state.record();
        Ok(state)
    }

    pub fn posterior(&self) -> &Density {
        &self.posterior
    }

    pub fn time(&self) -> f64 {
        match self.dt {
            Some(dt) => self.t0 + self.steps as f64 * dt,
            None => self.t0,
        }
    }

    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    pub fn history(&self) -> &[HistoryRecord] {
        &self.history
    }

    fn summary(&self) -> HistoryRecord {
        let m = moments(&self.posterior);
        let modes = marginal(&self.posterior, 0)
            .map(|line| count_modes(&line, MODE_PROMINENCE))
            .unwrap_or(0);
        HistoryRecord {
            t: self.time(),
            std: m.std(),
            mean: m.mean,
            mode_count: modes,
            log_evidence: self.log_evidence,
        }
    }

    fn record(&mut self) {
        let rec = self.summary();
        self.history.push(rec);
    }

    fn bind_step(&mut self, op: &TransitionOperator) -> Result<()> {
        if !op.grid().same_mesh(self.posterior.grid()) {
            return Err(Error::IncompatibleGrids("operator and posterior grids differ".into()));
        }
        match self.dt {
            Some(dt) if dt != op.dt() && self.steps > 0 => Err(Error::InvalidArgument(format!(
                "filter already advanced with dt = {dt}, operator has dt = {}",
                op.dt()
            ))),
            _ => {
                self.dt = Some(op.dt());
                Ok(())
            }
        }
    }

    /// Advances by exactly `n` steps, recording history after each one.
    pub fn advance_steps(&mut self, op: &TransitionOperator, n: u64) -> Result<()> {
        self.bind_step(op)?;
        let mut x = self.posterior.values().to_vec();
        for _ in 0..n {
            x = op.apply(&x);
            self.posterior = Density::new(op.grid().clone(), x.clone())?;
            self.steps += 1;
            self.record();
        }
        Ok(())
    }

    /// Prediction to `t_target` (whole steps, `floor` semantics).
    pub fn predict(&mut self, op: &TransitionOperator, t_target: f64) -> Result<()> {
        let now = self.time();
        if t_target < now - 1e-12 * now.abs().max(1.0) {
            return Err(Error::TimeRegression { from: now, to: t_target });
        }
        self.bind_step(op)?;
        let n = op.steps_until(t_target - now);
        self.advance_steps(op, n)
    }

    /// Bayes update with observation `z` at the current time.
    pub fn bayes_update(&mut self, model: &ObservationModel, z: &[f64]) -> Result<()> {
        let grid = self.posterior.grid().clone();
        let d = grid.dim();
        let loglik: Vec<f64> = (0..grid.num_cells())
            .map(|c| {
                let x = grid.cell_center(c);
                model.log_likelihood(z, &x[..d])
            })
            .collect();
        if loglik.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(Error::NonFinite("log-likelihood".into()));
        }
        let shift = loglik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if shift == f64::NEG_INFINITY {
            return Err(Error::ZeroEvidence { t: self.time() });
        }
        let weighted: Vec<f64> = self
            .posterior
            .values()
            .iter()
            .zip(&loglik)
            .map(|(p, l)| p * (l - shift).exp())
            .collect();
        let scaled_evidence = weighted.iter().sum::<f64>() * grid.cell_volume();
        if !(scaled_evidence > EVIDENCE_FLOOR) {
            return Err(Error::ZeroEvidence { t: self.time() });
        }
        self.log_evidence += shift + scaled_evidence.ln();
        let values = weighted.into_iter().map(|w| w / scaled_evidence).collect();
        self.posterior = Density::new(grid, values)?;
        let rec = self.summary();
        match self.history.last_mut() {
            Some(last) if last.t == rec.t => *last = rec,
            _ => self.history.push(rec),
        }
        Ok(())
    }
}

/// Requested versus realised time after snapping to the step lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSnap {
    pub requested: f64,
    pub actual: f64,
}

impl TimeSnap {
    pub fn distance(&self) -> f64 {
        (self.actual - self.requested).abs()
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub snap: TimeSnap,
    pub density: Density,
}

#[derive(Debug, Clone)]
pub struct FilterRun {
    pub state: FilterState,
    pub observation_snaps: Vec<TimeSnap>,
    pub snapshots: Vec<Snapshot>,
}

/// Alternates prediction and update over `obs`, then predicts to `t_end`.
pub fn run_filter(
    prior: Density,
    op: &TransitionOperator,
    model: &ObservationModel,
    obs: &ObservationSequence,
    t_end: f64,
) -> Result<FilterRun> {
    run_filter_with_snapshots(prior, op, model, obs, t_end, &[])
}

/// [`run_filter`] that also captures the posterior near each snapshot time.
/// A snapshot on an observation step is taken after the update.
pub fn run_filter_with_snapshots(
    prior: Density,
    op: &TransitionOperator,
    model: &ObservationModel,
    obs: &ObservationSequence,
    t_end: f64,
    snapshot_times: &[f64],
) -> Result<FilterRun> {
    if let Some(last) = obs.entries().last() {
        if last.t > t_end {
            return Err(Error::InvalidObservations(format!(
                "observation at t = {} after t_end = {t_end}",
                last.t
            )));
        }
    }
    let dt = op.dt();
    let snap_step = |t: f64| (t / dt).round().max(0.0) as u64;
    let mut state = FilterState::new(prior, 0.0)?;
    state.bind_step(op)?;

    let mut shots: Vec<(u64, f64)> = snapshot_times.iter().map(|&t| (snap_step(t), t)).collect();
    shots.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut shots = shots.into_iter().peekable();
    let mut snapshots = Vec::new();
    let mut observation_snaps = Vec::new();

    let mut take = |state: &FilterState, upto: u64, inclusive: bool, out: &mut Vec<Snapshot>| {
        while let Some(&(k, t)) = shots.peek() {
            if k < upto || (inclusive && k == upto) {
                debug_assert_eq!(k, state.steps);
                out.push(Snapshot {
                    snap: TimeSnap {
                        requested: t,
                        actual: state.time(),
                    },
                    density: state.posterior.clone(),
                });
                shots.next();
            } else {
                break;
            }
        }
    };

    let mut advance_to = |state: &mut FilterState, target: u64, snapshots: &mut Vec<Snapshot>| -> Result<()> {
        while state.steps < target {
            take(state, state.steps, true, snapshots);
            state.advance_steps(op, 1)?;
        }
        Ok(())
    };

    for o in obs.entries() {
        let k = snap_step(o.t);
        advance_to(&mut state, k, &mut snapshots)?;
        state.bayes_update(model, &o.z)?;
        observation_snaps.push(TimeSnap {
            requested: o.t,
            actual: state.time(),
        });
    }
    let end = op.steps_until(t_end).max(state.steps);
    advance_to(&mut state, end, &mut snapshots)?;
    // anything left lies at or beyond the final step
    let mut rest = Vec::new();
    for (_, t) in shots {
        rest.push(Snapshot {
            snap: TimeSnap {
                requested: t,
                actual: state.time(),
            },
            density: state.posterior.clone(),
        });
    }
    snapshots.extend(rest);

    Ok(FilterRun {
        state,
        observation_snaps,
        snapshots,
    })
}

/// Fixed-step RK4 step length for [`simulate_truth`].
pub const TRUTH_STEP: f64 = 1e-3;

/// Integrates `dx/dt = v(x)` with classical RK4 at step ≤ [`TRUTH_STEP`],
/// reporting the state at each requested time. When `wrap` is given, periodic
/// axes of that grid are wrapped into its box in the reported states.
pub fn simulate_truth(field: &VelocityField, x0: &[f64], times: &[f64], wrap: Option<&Grid>) -> Result<Vec<Vec<f64>>> {
    let d = field.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x0.len() });
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("times must be non-negative and increasing".into()));
    }
    let mut x = [0.0; MAX_DIM];
    x[..d].copy_from_slice(x0);
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = ([0.0; MAX_DIM], [0.0; MAX_DIM], [0.0; MAX_DIM], [0.0; MAX_DIM], [0.0; MAX_DIM]);
    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let n = (span / TRUTH_STEP).ceil() as usize;
            let h = span / n as f64;
            for _ in 0..n {
                field.eval_into(&x[..d], &mut k1[..d]);
                for i in 0..d {
                    tmp[i] = x[i] + 0.5 * h * k1[i];
                }
                field.eval_into(&tmp[..d], &mut k2[..d]);
                for i in 0..d {
                    tmp[i] = x[i] + 0.5 * h * k2[i];
                }
                field.eval_into(&tmp[..d], &mut k3[..d]);
                for i in 0..d {
                    tmp[i] = x[i] + h * k3[i];
                }
                field.eval_into(&tmp[..d], &mut k4[..d]);
                for i in 0..d {
                    x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            t = target;
        }
        let mut state = x[..d].to_vec();
        if let Some(grid) = wrap {
            let dom = grid.domain();
            for (a, bc) in grid.boundary_conditions().iter().enumerate() {
                if *bc == BoundaryCondition::Periodic {
                    let w = dom.width(a);
                    state[a] = dom.lower()[a] + (state[a] - dom.lower()[a]).rem_euclid(w);
                }
            }
        }
        out.push(state);
    }
    Ok(out)
}

/// `z_k = |x₁(t_k)| + σ ξ_k` with `ξ_k` drawn from a ChaCha8 stream seeded by
/// `seed`.
pub fn synthesize_observations(times: &[f64], truth: &[Vec<f64>], sigma: f64, seed: u64) -> Result<ObservationSequence> {
    if times.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: truth.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = times
        .iter()
        .zip(truth)
        .map(|(&t, x)| {
            let xi: f64 = StandardNormal.sample(&mut rng);
            Observation {
                t,
                z: vec![x[0].abs() + sigma * xi],
            }
        })
        .collect();
    ObservationSequence::new(entries)
}

/// Normalizes a projected prior, returning the mass it had before.
pub fn normalized_prior(projected: &Density) -> Result<(Density, f64)> {
    let m = projected.mass();
    Ok((normalize(projected)?, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{point_reflection_defect, project};
    use crate::grid::{BoundaryCondition::*, BoxDomain};
    use crate::operator::assemble;
    use crate::quadrature::Quadrature;
    use crate::velocity::{compute_fluxes, constant_field, pendulum_field, rotation_field};
    use std::f64::consts::PI;

    fn pendulum_setup(n: usize) -> (Arc<Grid>, TransitionOperator, Density) {
        let g = Arc::new(Grid::new(BoxDomain::cube(2, -PI, PI).unwrap(), vec![n, n], vec![Periodic, Neumann]).unwrap());
        let fl = compute_fluxes(&pendulum_field(1.0).unwrap(), &g, Quadrature::Midpoint).unwrap();
        let op = assemble(&fl, &g, g.spacing()[0] / (2.0 * PI + 1.0)).unwrap();
        let prior = project(
            |x| (-(x[0] * x[0] + x[1] * x[1]) / 1.28).exp() / (1.28 * PI),
            &g,
            Quadrature::Midpoint,
        )
        .unwrap();
        let (prior, _) = normalized_prior(&prior).unwrap();
        (g, op, prior)
    }

    #[test]
    fn model_values() {
        let m = gaussian_abs_position_model(0.1).unwrap();
        let top = -(0.1 * (2.0 * PI).sqrt()).ln();
        assert!((m.log_likelihood(&[0.7], &[0.7, 3.0]) - top).abs() < 1e-15);
        assert!((m.log_likelihood(&[0.5], &[0.6, 0.0]) - (top - 0.5)).abs() < 1e-12);
        for (a, b, z) in [(0.3, 1.0, 0.2), (-2.0, 0.5, 1.9), (1.1, -3.0, -0.4)] {
            assert_eq!(m.log_likelihood(&[z], &[a, b]), m.log_likelihood(&[z], &[-a, b]));
        }
        assert!(gaussian_abs_position_model(0.0).is_err());
    }

    #[test]
    fn sequence_validation() {
        assert!(ObservationSequence::from_pairs(vec![(1.0, vec![0.0]), (1.0, vec![0.0])]).is_err());
        assert!(ObservationSequence::from_pairs(vec![(0.0, vec![0.0])]).is_err());
        assert!(ObservationSequence::from_pairs(vec![(2.0, vec![0.0]), (1.0, vec![0.0])]).is_err());
        assert_eq!(ObservationSequence::from_pairs(vec![(0.5, vec![1.0]), (1.5, vec![2.0])]).unwrap().len(), 2);
    }

    #[test]
    fn predict_to_now_is_noop_and_regression_errors() {
        let (_, op, prior) = pendulum_setup(16);
        let mut s = FilterState::new(prior.clone(), 0.0).unwrap();
        s.predict(&op, 0.0).unwrap();
        assert_eq!(s.posterior(), &prior);
        s.predict(&op, 10.0 * op.dt()).unwrap();
        assert_eq!(s.history().len(), 11);
        assert!(matches!(s.predict(&op, op.dt()), Err(Error::TimeRegression { .. })));
    }

    #[test]
    fn zero_field_leaves_posterior_alone() {
        let (g, _, prior) = pendulum_setup(12);
        let fl = compute_fluxes(&constant_field(vec![0.0, 0.0]).unwrap(), &g, Quadrature::Midpoint).unwrap();
        let op = assemble(&fl, &g, 0.1).unwrap();
        let mut s = FilterState::new(prior.clone(), 0.0).unwrap();
        s.predict(&op, 3.0).unwrap();
        assert_eq!(s.posterior(), &prior);
    }

    #[test]
    fn prediction_keeps_mass_and_sign() {
        let (_, op, prior) = pendulum_setup(40);
        let mut s = FilterState::new(prior, 0.0).unwrap();
        s.predict(&op, 2.0 * PI / 7.0).unwrap();
        assert!((s.posterior().mass() - 1.0).abs() < 1e-12);
        assert!(s.posterior().min_value() >= 0.0);
    }

    #[test]
    fn constant_likelihood() {
        let (_, _, prior) = pendulum_setup(10);
        let mut s = FilterState::new(prior.clone(), 0.0).unwrap();
        let c: f64 = 0.37;
        let model = ObservationModel::new("const", move |_, _| c.ln());
        s.bayes_update(&model, &[0.0]).unwrap();
        for (a, b) in s.posterior().values().iter().zip(prior.values()) {
            assert!((a - b).abs() <= 1e-15 * b.abs());
        }
        assert!((s.log_evidence() - c.ln()).abs() < 1e-14);
        assert_eq!(s.history().len(), 1);
    }

    #[test]
    fn half_plane_indicator_by_hand() {
        // 2 x 2 cells on [0,2]², masses 0.1, 0.2, 0.3, 0.4 (x₀ fastest)
        let g = Arc::new(Grid::new(BoxDomain::cube(2, 0.0, 2.0).unwrap(), vec![2, 2], vec![Neumann, Neumann]).unwrap());
        let prior = Density::new(g.clone(), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut s = FilterState::new(prior, 0.0).unwrap();
        let left = ObservationModel::new("x0 < 1", |_, x| if x[0] < 1.0 { 0.0 } else { f64::NEG_INFINITY });
        s.bayes_update(&left, &[0.0]).unwrap();
        // cells 0 and 2 hold 0.4 of the mass
        assert!((s.log_evidence() - 0.4f64.ln()).abs() < 1e-15);
        let v = s.posterior().values();
        assert!((v[0] - 0.25).abs() < 1e-15 && (v[2] - 0.75).abs() < 1e-15);
        assert_eq!((v[1], v[3]), (0.0, 0.0));

        let nowhere = ObservationModel::new("never", |_, _| f64::NEG_INFINITY);
        assert!(matches!(s.bayes_update(&nowhere, &[0.0]), Err(Error::ZeroEvidence { .. })));
        let right = ObservationModel::new("x0 > 1", |_, x| if x[0] > 1.0 { 0.0 } else { f64::NEG_INFINITY });
        assert!(matches!(s.bayes_update(&right, &[0.0]), Err(Error::ZeroEvidence { .. })));
    }

    #[test]
    fn symmetry_survives_predict_and_update() {
        let (_, op, prior) = pendulum_setup(30);
        let model = gaussian_abs_position_model(0.1).unwrap();
        let mut s = FilterState::new(prior, 0.0).unwrap();
        for z in [0.4, 0.1, 0.55] {
            s.predict(&op, s.time() + 0.9).unwrap();
            s.bayes_update(&model, &[z]).unwrap();
            assert!(point_reflection_defect(s.posterior()) < 1e-10);
        }
    }

    #[test]
    fn empty_run_is_pure_evolution() {
        let (_, op, prior) = pendulum_setup(16);
        let model = gaussian_abs_position_model(0.1).unwrap();
        let run = run_filter(prior.clone(), &op, &model, &ObservationSequence::empty(), 1.0).unwrap();
        assert_eq!(run.state.log_evidence(), 0.0);
        assert_eq!(run.state.posterior(), &op.evolve(&prior, 1.0).unwrap());
        assert_eq!(run.state.history().len() as u64, op.steps_until(1.0) + 1);
    }

    #[test]
    fn sign_flipped_truth_gives_same_posterior() {
        let (g, op, prior) = pendulum_setup(24);
        let field = pendulum_field(1.0).unwrap();
        let times: Vec<f64> = (1..=3).map(|k| k as f64 * 2.0 * PI / 7.0).collect();
        let truth = simulate_truth(&field, &[0.2 * PI, 0.0], &times, Some(&g)).unwrap();
        let mirror: Vec<Vec<f64>> = truth.iter().map(|x| vec![-x[0], -x[1]]).collect();
        let a = synthesize_observations(&times, &truth, 0.1, 5).unwrap();
        let b = synthesize_observations(&times, &mirror, 0.1, 5).unwrap();
        assert_eq!(a, b);
        let model = gaussian_abs_position_model(0.1).unwrap();
        let ra = run_filter(prior.clone(), &op, &model, &a, 3.0).unwrap();
        let rb = run_filter(prior, &op, &model, &b, 3.0).unwrap();
        assert_eq!(ra.state.posterior(), rb.state.posterior());
    }

    #[test]
    fn snapshots_and_snaps() {
        let (_, op, prior) = pendulum_setup(16);
        let model = gaussian_abs_position_model(0.1).unwrap();
        let obs = ObservationSequence::from_pairs(vec![(0.5, vec![0.3])]).unwrap();
        let run = run_filter_with_snapshots(prior.clone(), &op, &model, &obs, 1.0, &[0.0, 0.5, 0.8]).unwrap();
        assert_eq!(run.snapshots.len(), 3);
        assert_eq!(run.snapshots[0].density, prior);
        assert!(run.observation_snaps[0].distance() <= 0.5 * op.dt() + 1e-15);
        for s in &run.snapshots {
            assert!(s.snap.distance() <= 0.5 * op.dt() + 1e-12);
        }
        // the snapshot on the observation step is the updated posterior
        let at_obs = &run.snapshots[1].density;
        let mut manual = FilterState::new(prior, 0.0).unwrap();
        manual.predict(&op, run.observation_snaps[0].actual).unwrap();
        manual.bayes_update(&model, &[0.3]).unwrap();
        assert_eq!(at_obs, manual.posterior());

        let late = ObservationSequence::from_pairs(vec![(2.0, vec![0.3])]).unwrap();
        assert!(run_filter(manual.posterior().clone(), &op, &model, &late, 1.0).is_err());
    }

    #[test]
    fn truth_integrator() {
        let zero = constant_field(vec![0.0, 0.0]).unwrap();
        let s = simulate_truth(&zero, &[0.3, -0.2], &[0.0, 1.0, 5.0], None).unwrap();
        assert!(s.iter().all(|x| x == &vec![0.3, -0.2]));

        let s = simulate_truth(&rotation_field(), &[1.0, 0.0], &[PI / 2.0], None).unwrap();
        assert!((s[0][0]).abs() < 1e-9 && (s[0][1] - 1.0).abs() < 1e-9);

        let field = pendulum_field(1.0).unwrap();
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 2.0 * PI / 100.0).collect();
        let s = simulate_truth(&field, &[0.2 * PI, 0.0], &times, None).unwrap();
        let energy = |x: &[f64]| 0.5 * x[1] * x[1] - x[0].cos();
        let e0 = energy(&s[0]);
        for x in &s {
            assert!((energy(x) - e0).abs() < 1e-8);
        }
    }

    #[test]
    fn wrapping_periodic_axes() {
        let g = Grid::new(BoxDomain::cube(2, -PI, PI).unwrap(), vec![4, 4], vec![Periodic, Neumann]).unwrap();
        let drift = constant_field(vec![1.0, 0.0]).unwrap();
        let s = simulate_truth(&drift, &[3.0, 0.5], &[1.0], Some(&g)).unwrap();
        assert!((s[0][0] - (4.0 - 2.0 * PI)).abs() < 1e-12);
        assert_eq!(s[0][1], 0.5);
    }

    #[test]
    fn synthetic_observations() {
        let times: Vec<f64> = (1..=5).map(|k| k as f64).collect();
        let truth: Vec<Vec<f64>> = times.iter().map(|t| vec![-(t * 0.1), 0.0]).collect();
        let a = synthesize_observations(&times, &truth, 1e-15, 3).unwrap();
        for (o, x) in a.entries().iter().zip(&truth) {
            assert!((o.z[0] - x[0].abs()).abs() < 1e-12);
        }
        let b = synthesize_observations(&times, &truth, 0.1, 11).unwrap();
        let c = synthesize_observations(&times, &truth, 0.1, 11).unwrap();
        assert_eq!(format!("{b:?}"), format!("{c:?}"));

        let n = 10_000;
        let times: Vec<f64> = (1..=n).map(|k| k as f64).collect();
        let truth = vec![vec![0.5, 0.0]; n];
        let obs = synthesize_observations(&times, &truth, 0.1, 2024).unwrap();
        let resid: Vec<f64> = obs.entries().iter().map(|o| o.z[0] - 0.5).collect();
        let mean = resid.iter().sum::<f64>() / n as f64;
        let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var.sqrt() - 0.1).abs() < 0.005);
    }
}

//! Flat `key = value` run configuration.
//!
//! Every key has a default, so an empty file is a valid configuration that
//! reproduces the pendulum experiments. Unknown keys are rejected. Reals may
//! use `pi` (see [`crate::parse_real`]); lists are comma separated.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bench::StepRule;
use crate::error::{Error, Result};
use crate::grid::{BoundaryCondition, BoxDomain, MAX_DIM};
use crate::parse_real;
use crate::quadrature::Quadrature;

/// `(key, default, description)` for every recognised key.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("field", "pendulum", "velocity field: pendulum[:g/l], constant:c1,c2,..., rotation, zero:<d>"),
    ("domain", "-pi,pi;-pi,pi", "box bounds, lo,hi per axis separated by ';'"),
    ("n", "50", "cells per axis, one value or one per axis"),
    ("bc", "periodic,neumann", "boundary condition per axis: periodic, neumann, dirichlet"),
    ("xi", "pendulum", "CFL safety margin in [0,1); pendulum = pi/(2pi+1), giving dt = h/(2pi+1) for the pendulum"),
    ("step", "speed", "time step rule: speed (a priori bound), cfl (assembled bound) or a fixed step"),
    ("quadrature", "midpoint", "face flux quadrature: midpoint or gauss:<k>"),
    ("markov_tol", "1e-12", "row-sum tolerance of the Markov check"),
    ("stationary", "false", "operator: also compute and write the stationary density"),
    ("stationary_tol", "1e-12", "operator: L1 change per iteration at which power iteration stops"),
    ("stationary_max_iter", "100000", "operator: power iteration cap"),
    ("write_matrix", "false", "operator: write the matrix as row col value triplets"),
    ("n_list", "50,100,200,400", "converge: cells per axis at each level, doubling"),
    ("t_final", "pi/4", "converge: evaluation time"),
    ("prior", "gaussian", "prior: gaussian, uniform or file"),
    ("prior_mean", "0,0", "gaussian prior mean; converge defaults to 0.6pi,0"),
    ("prior_cov", "0.64", "gaussian prior covariance: scalar, diagonal or full row-major"),
    ("prior_file", "", "density snapshot used when prior = file"),
    ("observations", "synthesize", "filter: synthesize, file or none"),
    ("obs_file", "", "filter: observation CSV used when observations = file"),
    ("obs_times", "2pi/7,4pi/7,6pi/7,8pi/7,10pi/7,12pi/7", "filter: synthetic observation times"),
    ("truth_x0", "0.2pi,0", "filter: initial state of the simulated truth"),
    ("sigma", "0.1", "filter: observation noise standard deviation"),
    ("t_end", "2pi", "filter: final time"),
    ("snapshots", "0,pi/6,pi/3,pi", "filter: times at which the posterior is written"),
    ("seed", "20140501", "filter: seed of the observation noise"),
    ("threads", "0", "worker threads, 0 for the rayon default"),
    ("out", "out", "output directory"),
];

#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    Gaussian { mean: Vec<f64>, cov: Vec<f64> },
    Uniform,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObservationSource {
    None,
    File(PathBuf),
    Synthesize { x0: Vec<f64>, times: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub field: String,
    pub domain: BoxDomain,
    pub n: Vec<usize>,
    pub bc: Vec<BoundaryCondition>,
    pub xi: f64,
    pub step: StepRule,
    pub quadrature: Quadrature,
    pub markov_tol: f64,
    pub stationary: bool,
    pub stationary_tol: f64,
    pub stationary_max_iter: usize,
    pub write_matrix: bool,
    pub n_list: Vec<usize>,
    pub t_final: f64,
    pub prior: PriorSpec,
    pub observations: ObservationSource,
    pub sigma: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RawConfig::default().build().expect("defaults are valid")
    }
}

/// Key/value pairs before interpretation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RawConfig {
    /// Defaults for one command: `converge` starts the prior at `(0.6π, 0)`,
    /// the other commands at the origin.
    pub fn for_command(command: &str) -> Self {
        let mut raw = Self::default();
        if command == "converge" {
            raw.values.insert("prior_mean".into(), "0.6pi,0".into());
        }
        raw
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        match self.values.get_mut(&key) {
            Some(slot) => {
                *slot = value.trim().to_string();
                Ok(())
            }
            None => Err(Error::Parse(format!("unknown config key '{key}'"))),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read config {}: {e}", path.display())))?;
        self.merge_text(&text)
    }

    /// `key = value` lines for every key, in sorted order.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn build(&self) -> Result<RunConfig> {
        let get = |k: &str| self.values[k].as_str();
        let err = |k: &str, e: Error| Error::Parse(format!("{k}: {e}"));

        let domain = parse_domain(get("domain")).map_err(|e| err("domain", e))?;
        let d = domain.dim();
        let n = per_axis(parse_list::<usize>(get("n")).map_err(|e| err("n", e))?, d, "n")?;
        let bc = per_axis(
            parse_list::<BoundaryCondition>(get("bc")).map_err(|e| err("bc", e))?,
            d,
            "bc",
        )?;
        let xi = match get("xi") {
            "pendulum" => crate::PENDULUM_XI,
            s => parse_real(s).map_err(|e| err("xi", e))?,
        };
        if !(0.0..1.0).contains(&xi) {
            return Err(err("xi", Error::XiOutOfRange(xi)));
        }
        let step = match get("step") {
            "speed" => StepRule::SpeedBound { xi },
            "cfl" => StepRule::CflBound { xi },
            s => StepRule::Fixed(positive(parse_real(s).map_err(|e| err("step", e))?, "step")?),
        };
        let quadrature: Quadrature = get("quadrature").parse().map_err(|e| err("quadrature", e))?;

        let n_list = parse_list::<usize>(get("n_list")).map_err(|e| err("n_list", e))?;
        if n_list.len() < 2 || n_list[0] == 0 || n_list.windows(2).any(|w| w[1] != 2 * w[0]) {
            return Err(Error::Parse(format!("n_list must double at every level, got {n_list:?}")));
        }

        let prior = match get("prior") {
            "gaussian" => {
                let mean = parse_reals(get("prior_mean")).map_err(|e| err("prior_mean", e))?;
                if mean.len() != d {
                    return Err(err("prior_mean", Error::DimensionMismatch { expected: d, got: mean.len() }));
                }
                let cov = parse_reals(get("prior_cov")).map_err(|e| err("prior_cov", e))?;
                PriorSpec::Gaussian {
                    mean,
                    cov: expand_cov(&cov, d)?,
                }
            }
            "uniform" => PriorSpec::Uniform,
            "file" => PriorSpec::File(non_empty_path(get("prior_file"), "prior_file")?),
            other => return Err(Error::Parse(format!("prior: unknown kind '{other}'"))),
        };

        let observations = match get("observations") {
            "none" => ObservationSource::None,
            "file" => ObservationSource::File(non_empty_path(get("obs_file"), "obs_file")?),
            "synthesize" => {
                let x0 = parse_reals(get("truth_x0")).map_err(|e| err("truth_x0", e))?;
                if x0.len() != d {
                    return Err(err("truth_x0", Error::DimensionMismatch { expected: d, got: x0.len() }));
                }
                let times = if get("obs_times").is_empty() {
                    Vec::new()
                } else {
                    parse_reals(get("obs_times")).map_err(|e| err("obs_times", e))?
                };
                ObservationSource::Synthesize { x0, times }
            }
            other => return Err(Error::Parse(format!("observations: unknown source '{other}'"))),
        };

        let snapshot_times = if get("snapshots").is_empty() {
            Vec::new()
        } else {
            parse_reals(get("snapshots")).map_err(|e| err("snapshots", e))?
        };
        if snapshot_times.iter().any(|t| *t < 0.0) {
            return Err(Error::Parse("snapshots: times must be non-negative".into()));
        }

        Ok(RunConfig {
            field: get("field").to_string(),
            domain,
            n,
            bc,
            xi,
            step,
            quadrature,
            markov_tol: non_negative(parse_real(get("markov_tol")).map_err(|e| err("markov_tol", e))?, "markov_tol")?,
            stationary: parse_bool(get("stationary")).map_err(|e| err("stationary", e))?,
            stationary_tol: positive(
                parse_real(get("stationary_tol")).map_err(|e| err("stationary_tol", e))?,
                "stationary_tol",
            )?,
            stationary_max_iter: parse_one(get("stationary_max_iter")).map_err(|e| err("stationary_max_iter", e))?,
            write_matrix: parse_bool(get("write_matrix")).map_err(|e| err("write_matrix", e))?,
            n_list,
            t_final: non_negative(parse_real(get("t_final")).map_err(|e| err("t_final", e))?, "t_final")?,
            prior,
            observations,
            sigma: positive(parse_real(get("sigma")).map_err(|e| err("sigma", e))?, "sigma")?,
            t_end: non_negative(parse_real(get("t_end")).map_err(|e| err("t_end", e))?, "t_end")?,
            snapshot_times,
            seed: parse_one(get("seed")).map_err(|e| err("seed", e))?,
            threads: parse_one(get("threads")).map_err(|e| err("threads", e))?,
            out: PathBuf::from(get("out")),
        })
    }
}

impl fmt::Display for RawConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn positive(v: f64, key: &str) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Parse(format!("{key} must be positive, got {v}")))
    }
}

fn non_negative(v: f64, key: &str) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Parse(format!("{key} must be non-negative, got {v}")))
    }
}

fn non_empty_path(s: &str, key: &str) -> Result<PathBuf> {
    if s.is_empty() {
        Err(Error::Parse(format!("{key} is required")))
    } else {
        Ok(PathBuf::from(s))
    }
}

fn parse_bool(s: &str) -> Result<bool> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Parse(format!("not a boolean: '{s}'"))),
    }
}

fn parse_one<T: FromStr>(s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse(format!("cannot parse '{s}'")))
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',').map(parse_one).collect()
}

fn parse_reals(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_real).collect()
}

fn per_axis<T: Clone>(v: Vec<T>, d: usize, key: &str) -> Result<Vec<T>> {
    match v.len() {
        1 => Ok(vec![v[0].clone(); d]),
        k if k == d => Ok(v),
        k => Err(Error::Parse(format!("{key}: expected 1 or {d} values, got {k}"))),
    }
}

fn parse_domain(s: &str) -> Result<BoxDomain> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for axis in s.split(';') {
        let (a, b) = axis
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("axis bounds '{axis}' need lo,hi")))?;
        lo.push(parse_real(a)?);
        hi.push(parse_real(b)?);
    }
    BoxDomain::new(lo, hi)
}

/// Scalar `s` gives `sI`, `d` values a diagonal, `d²` values a full matrix.
fn expand_cov(c: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut full = vec![0.0; d * d];
    match c.len() {
        1 => (0..d).for_each(|i| full[i * d + i] = c[0]),
        k if k == d => (0..d).for_each(|i| full[i * d + i] = c[i]),
        k if k == d * d => full.copy_from_slice(c),
        k => return Err(Error::Parse(format!("prior_cov: expected 1, {d} or {} values, got {k}", d * d))),
    }
    Ok(full)
}

/// Multivariate normal density with the given mean and covariance
/// (row-major, symmetric positive definite).
pub fn gaussian_pdf(mean: &[f64], cov: &[f64]) -> Result<impl Fn(&[f64]) -> f64 + Sync + Send + Clone> {
    let d = mean.len();
    if d == 0 || d > MAX_DIM || cov.len() != d * d {
        return Err(Error::InvalidArgument("covariance shape does not match the mean".into()));
    }
    // Cholesky factor L with C = L Lᵀ
    let mut l = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..d {
        for j in 0..=i {
            if (cov[i * d + j] - cov[j * d + i]).abs() > 1e-12 * cov[i * d + j].abs().max(1.0) {
                return Err(Error::InvalidArgument("covariance is not symmetric".into()));
            }
            let s: f64 = cov[i * d + j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if s <= 0.0 {
                    return Err(Error::InvalidArgument("covariance is not positive definite".into()));
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let log_det_half: f64 = (0..d).map(|i| l[i][i].ln()).sum();
    let log_norm = -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - log_det_half;
    let mut m = [0.0; MAX_DIM];
    m[..d].copy_from_slice(mean);
    Ok(move |x: &[f64]| {
        // forward substitution L y = x − m; quadratic form is |y|²
        let mut y = [0.0; MAX_DIM];
        let mut q = 0.0;
        for i in 0..d {
            let s = x[i] - m[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>();
            y[i] = s / l[i][i];
            q += y[i] * y[i];
        }
        (log_norm - 0.5 * q).exp()
    })
}

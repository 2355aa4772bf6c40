//! The `fvm-markov` command line: `operator`, `converge` and `filter`.
//!
//! Settings come from the key defaults, then `--config <file>`, then
//! `--<key> <value>` flags, later sources winning. Every command runs inside
//! a rayon pool sized by `--threads`; outputs do not depend on that size.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Arg, ArgAction, ArgMatches, Command};

use crate::bench::{
    convergence_rows, convergence_table, expectation_rows, write_convergence_csv, write_expectation_csv, Study,
};
use crate::config::{gaussian_pdf, ObservationSource, PriorSpec, RawConfig, RunConfig, KEYS};
use crate::density::{normalize, project, Density};
use crate::error::{Error, Result};
use crate::filter::{
    gaussian_abs_position_model, run_filter_with_snapshots, simulate_truth, synthesize_observations,
    ObservationSequence, TimeSnap,
};
use crate::grid::Grid;
use crate::io::{
    read_density, read_observations, write_density, write_observations, write_run_report, write_time_snaps,
    write_trajectory,
};
use crate::operator::{assemble, max_stable_dt, TransitionOperator};
use crate::quadrature::Quadrature;
use crate::velocity::{compute_fluxes, VelocityField};

pub const EXIT_OK: i32 = 0;
/// Runtime failure, or an operator that failed the Markov check.
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CFL: i32 = 3;
pub const EXIT_ZERO_EVIDENCE: i32 = 4;

pub const COMMANDS: [&str; 3] = ["operator", "converge", "filter"];

/// Keys with a dedicated flag of their own.
const SHARED_FLAGS: [&str; 3] = ["out", "seed", "threads"];

pub fn command() -> Command {
    let mut shared = vec![Arg::new("config")
        .long("config")
        .value_name("PATH")
        .help("key = value configuration file")];
    for key in SHARED_FLAGS {
        let help = KEYS.iter().find(|(k, _, _)| *k == key).map_or("", |k| k.2);
        shared.push(Arg::new(key).long(key).value_name("VALUE").help(help));
    }
    shared.push(
        Arg::new("print-config")
            .long("print-config")
            .action(ArgAction::SetTrue)
            .help("print the effective configuration and exit"),
    );
    let overrides: Vec<Arg> = KEYS
        .iter()
        .filter(|(k, _, _)| !SHARED_FLAGS.contains(k))
        .map(|(k, default, help)| {
            Arg::new(*k)
                .long(*k)
                .value_name("VALUE")
                .allow_hyphen_values(true)
                .help(format!("{help} [default: {default}]"))
                .help_heading("Configuration keys")
        })
        .collect();

    let sub = |name: &'static str, about: &'static str| {
        Command::new(name)
            .about(about)
            .args(shared.clone())
            .args(overrides.clone())
    };
    Command::new("fvm-markov")
        .about("Upwind finite volume transfer operators and grid-based Bayesian filtering")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(sub(
            "operator",
            "assemble the transition matrix, check the CFL bound and stochasticity",
        ))
        .subcommand(sub("converge", "mesh refinement study of an evolved prior"))
        .subcommand(sub("filter", "grid-based Bayesian filter on synthetic or recorded observations"))
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::CflViolation { .. } => EXIT_CFL,
        Error::ZeroEvidence { .. } => EXIT_ZERO_EVIDENCE,
        Error::Io(_) | Error::NoConvergence { .. } | Error::NotMassConserving => EXIT_FAILURE,
        _ => EXIT_CONFIG,
    }
}

fn raw_config(name: &str, m: &ArgMatches) -> Result<RawConfig> {
    let mut raw = RawConfig::for_command(name);
    if let Some(path) = m.get_one::<String>("config") {
        raw.merge_file(Path::new(path))?;
    }
    for (key, _, _) in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            raw.set(key, v)?;
        }
    }
    Ok(raw)
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Reports go to `stdout`, diagnostics to stderr.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let raw = match raw_config(name, sub) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if sub.get_flag("print-config") {
        return match write!(stdout, "{raw}") {
            Ok(()) => EXIT_OK,
            Err(_) => EXIT_FAILURE,
        };
    }
    let cfg = match raw.build() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {} threads: {e}", cfg.threads);
            return EXIT_CONFIG;
        }
    };
    // the report is buffered so the pool never touches the caller's writer
    let mut report = Vec::new();
    let result = pool.install(|| match name {
        "operator" => cmd_operator(&cfg, &mut report),
        "converge" => cmd_converge(&cfg, &mut report),
        "filter" => cmd_filter(&cfg, &mut report),
        _ => unreachable!("unknown subcommand {name}"),
    });
    if stdout.write_all(&report).and_then(|_| stdout.flush()).is_err() {
        return EXIT_FAILURE;
    }
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn grid_of(cfg: &RunConfig) -> Result<Arc<Grid>> {
    Ok(Arc::new(Grid::new(cfg.domain.clone(), cfg.n.clone(), cfg.bc.clone())?))
}

fn field_of(cfg: &RunConfig) -> Result<VelocityField> {
    let field = VelocityField::from_name(&cfg.field)?;
    if field.dim() != cfg.domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.domain.dim(),
            got: field.dim(),
        });
    }
    Ok(field)
}

/// Step for a single-grid run; falls back to `h_min` when the field never
/// leaves a cell.
fn step_of(cfg: &RunConfig, field: &VelocityField, grid: &Grid) -> Result<f64> {
    let dt = cfg.step.dt(field, grid, cfg.quadrature)?;
    Ok(if dt.is_finite() { dt } else { grid.h_min() })
}

fn prior_of(cfg: &RunConfig, grid: &Arc<Grid>) -> Result<Density> {
    let p = match &cfg.prior {
        PriorSpec::Gaussian { mean, cov } => project(gaussian_pdf(mean, cov)?, grid, Quadrature::Midpoint)?,
        PriorSpec::Uniform => Density::uniform(grid.clone()),
        PriorSpec::File(path) => read_density(BufReader::new(File::open(path)?))?.into_density_on(grid)?,
    };
    normalize(&p)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn describe_grid(grid: &Grid) -> String {
    let n: Vec<String> = grid.counts().iter().map(|n| n.to_string()).collect();
    format!("n={} cells={} h_min={:.6e}", n.join("x"), grid.num_cells(), grid.h_min())
}

pub fn cmd_operator(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let grid = grid_of(cfg)?;
    let field = field_of(cfg)?;
    let fluxes = compute_fluxes(&field, &grid, cfg.quadrature)?;
    let cfl = max_stable_dt(&fluxes, &grid, cfg.xi)?;
    let dt = step_of(cfg, &field, &grid)?;
    writeln!(out, "field: {}", field.name())?;
    writeln!(out, "grid: {}", describe_grid(&grid))?;
    let binding = cfl.binding_cell.map_or("none".into(), |c| c.to_string());
    writeln!(out, "cfl: xi={:.6} dt_max={:.6e} binding_cell={binding}", cfl.xi, cfl.dt_max)?;
    writeln!(out, "dt: {dt:.6e}")?;
    let op = assemble(&fluxes, &grid, dt)?;
    let rep = op.verify_markov(cfg.markov_tol);
    writeln!(out, "nnz: {}", op.nnz())?;
    writeln!(
        out,
        "markov: min_entry={:.6e} max_row_sum_err={:.3e} is_markov={}",
        rep.min_entry, rep.max_row_sum_err, rep.is_markov
    )?;
    if cfg.write_matrix {
        let mut w = create(&cfg.out, "operator.txt")?;
        op.write_triplets(&mut w)?;
        w.flush()?;
        writeln!(out, "wrote {}", cfg.out.join("operator.txt").display())?;
    }
    if cfg.stationary {
        match op.stationary(cfg.stationary_tol, cfg.stationary_max_iter) {
            Ok(st) => {
                let mut w = create(&cfg.out, "stationary.csv")?;
                write_density(&mut w, &st, 0.0)?;
                w.flush()?;
                writeln!(out, "wrote {}", cfg.out.join("stationary.csv").display())?;
            }
            Err(Error::NoConvergence { iterations, residual, .. }) => {
                writeln!(
                    out,
                    "stationary: no convergence after {iterations} iterations (residual {residual:.3e})"
                )?;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(if rep.is_markov { EXIT_OK } else { EXIT_FAILURE })
}

pub fn cmd_converge(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let field = field_of(cfg)?;
    let pdf: Box<dyn Fn(&[f64]) -> f64 + Sync> = match &cfg.prior {
        PriorSpec::Gaussian { mean, cov } => Box::new(gaussian_pdf(mean, cov)?),
        PriorSpec::Uniform => Box::new(|_: &[f64]| 1.0),
        PriorSpec::File(_) => {
            return Err(Error::InvalidArgument(
                "converge needs an analytic prior (gaussian or uniform)".into(),
            ))
        }
    };
    let study = Study {
        field: &field,
        domain: cfg.domain.clone(),
        bc: cfg.bc.clone(),
        prior: &*pdf,
        t_final: cfg.t_final,
        step: cfg.step,
        quadrature: cfg.quadrature,
    };
    let levels = study.levels(&cfg.n_list)?;
    let rows = convergence_rows(&levels)?;
    let second_moment = expectation_rows(&levels, |x| x.iter().map(|v| v * v).sum())?;

    writeln!(out, "field: {}  t = {:.6}", field.name(), cfg.t_final)?;
    for l in &levels {
        writeln!(out, "level n={}: dt={:.6e} steps={}", l.n, l.dt, l.steps)?;
    }
    let table = convergence_table(&rows);
    write!(out, "{table}")?;
    writeln!(out, "E[|x|^2]:")?;
    for r in &second_moment {
        let order = r.order.map_or("-".into(), |o| format!("{o:.4}"));
        let diff = r.diff.map_or("-".into(), |d| format!("{d:.4e}"));
        writeln!(out, "{:>6}  {:>14.8}  {:>12}  {:>8}", r.n, r.value, diff, order)?;
    }

    let mut w = create(&cfg.out, "convergence.csv")?;
    write_convergence_csv(&mut w, &rows)?;
    w.flush()?;
    let mut w = create(&cfg.out, "convergence.txt")?;
    w.write_all(table.as_bytes())?;
    w.flush()?;
    let mut w = create(&cfg.out, "expectation.csv")?;
    write_expectation_csv(&mut w, &second_moment)?;
    w.flush()?;
    writeln!(out, "wrote {}", cfg.out.display())?;
    Ok(EXIT_OK)
}

/// Files written by [`cmd_filter`].
#[derive(Debug, Clone, Default)]
pub struct FilterOutputs {
    pub report: PathBuf,
    pub snaps: PathBuf,
    pub snapshots: Vec<PathBuf>,
    pub observations: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

pub fn cmd_filter(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    run_filter_command(cfg, out).map(|_| EXIT_OK)
}

pub fn run_filter_command(cfg: &RunConfig, out: &mut dyn Write) -> Result<FilterOutputs> {
    let grid = grid_of(cfg)?;
    let field = field_of(cfg)?;
    let fluxes = compute_fluxes(&field, &grid, cfg.quadrature)?;
    let op: TransitionOperator = assemble(&fluxes, &grid, step_of(cfg, &field, &grid)?)?;
    let prior = prior_of(cfg, &grid)?;
    let model = gaussian_abs_position_model(cfg.sigma)?;
    let mut files = FilterOutputs::default();

    let obs = match &cfg.observations {
        ObservationSource::None => ObservationSequence::empty(),
        ObservationSource::File(path) => {
            ObservationSequence::from_pairs(read_observations(BufReader::new(File::open(path)?))?)?
        }
        ObservationSource::Synthesize { x0, times } => {
            let truth = simulate_truth(&field, x0, times, Some(&grid))?;
            let obs = synthesize_observations(times, &truth, cfg.sigma, cfg.seed)?;
            let mut w = create(&cfg.out, "observations.csv")?;
            write_observations(&mut w, &obs.to_pairs())?;
            w.flush()?;
            files.observations = Some(cfg.out.join("observations.csv"));
            let mut w = create(&cfg.out, "truth.csv")?;
            write_trajectory(&mut w, times, &truth)?;
            w.flush()?;
            files.truth = Some(cfg.out.join("truth.csv"));
            obs
        }
    };

    let run = run_filter_with_snapshots(prior, &op, &model, &obs, cfg.t_end, &cfg.snapshot_times)?;

    let mut w = create(&cfg.out, "report.csv")?;
    write_run_report(&mut w, run.state.history())?;
    w.flush()?;
    files.report = cfg.out.join("report.csv");

    let mut snaps: Vec<(&str, TimeSnap)> = run.observation_snaps.iter().map(|s| ("observation", s.clone())).collect();
    snaps.extend(run.snapshots.iter().map(|s| ("snapshot", s.snap.clone())));
    let mut w = create(&cfg.out, "snaps.csv")?;
    write_time_snaps(&mut w, &snaps)?;
    w.flush()?;
    files.snaps = cfg.out.join("snaps.csv");

    for (i, s) in run.snapshots.iter().enumerate() {
        let name = format!("snapshot_{i:02}.csv");
        let mut w = create(&cfg.out, &name)?;
        write_density(&mut w, &s.density, s.snap.actual)?;
        w.flush()?;
        files.snapshots.push(cfg.out.join(name));
    }

    let last = run.state.history().last().expect("history starts with the prior");
    writeln!(out, "grid: {}", describe_grid(&grid))?;
    writeln!(out, "dt: {:.6e}  steps: {}", op.dt(), run.state.history().len() - 1)?;
    writeln!(out, "observations: {}", obs.len())?;
    writeln!(out, "log evidence: {:.10e}", run.state.log_evidence())?;
    writeln!(
        out,
        "t={:.6}: mean={:?} std={:?} modes(x1)={}",
        last.t, last.mean, last.std, last.mode_count
    )?;
    writeln!(out, "wrote {} ({} snapshots)", cfg.out.display(), files.snapshots.len())?;
    Ok(files)
}

//! End-to-end runs of the `fvm-markov` binary.

use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use fvm_markov::io::read_density;
use fvm_markov::{BoundaryCondition, Density, Grid};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fvm-markov"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn operator_defaults_are_stochastic() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["operator"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("n=50x50 cells=2500"));
    let err: f64 = text
        .split("max_row_sum_err=")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse().ok())
        .unwrap();
    assert!(err < 1e-12);
}

#[test]
fn step_above_the_bound_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["operator", "--step", "0.5"])), 3);
}

#[test]
fn zero_field_stationary_is_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["operator", "--field", "zero:2", "--n", "10", "--stationary", "true", "--out", "res"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let file = fs::File::open(dir.path().join("res/stationary.csv")).unwrap();
    let snap = read_density(BufReader::new(file)).unwrap();
    let st = snap.into_density(vec![BoundaryCondition::Periodic, BoundaryCondition::Neumann]).unwrap();
    let u = Density::uniform(st.grid().clone());
    assert!(fvm_markov::l1_distance(&st, &u).unwrap() < 1e-14);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), "n = 12\nsigma = 0.3 # noisy\n").unwrap();
    let out = run(dir.path(), &["filter", "--config", "run.cfg", "--sigma", "0.2", "--print-config"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("n = 12\n"));
    assert!(text.contains("sigma = 0.2\n"));

    fs::write(dir.path().join("bad.cfg"), "resolution = 12\n").unwrap();
    assert_eq!(code(&run(dir.path(), &["filter", "--config", "bad.cfg"])), 2);
}

#[test]
fn converge_validation_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["converge", "--n_list", "10,20,30"])), 2);

    let out = run(dir.path(), &["converge", "--n_list", "8,16,32"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/convergence.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,l1_diff,effective_order");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("8,") && lines[2].starts_with("16,"));
    assert!(dir.path().join("out/convergence.txt").exists());
    assert!(dir.path().join("out/expectation.csv").exists());
}

#[test]
fn converge_at_time_zero_measures_projection_only() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(dir.path(), &["converge", "--n_list", "8,16,32", "--t_final", "0", "--out", "a"]);
    let b = run(
        dir.path(),
        &["converge", "--n_list", "8,16,32", "--t_final", "0", "--field", "zero:2", "--out", "b"],
    );
    assert_eq!(code(&a), 0);
    assert_eq!(code(&b), 0);
    assert_eq!(
        fs::read(dir.path().join("a/convergence.csv")).unwrap(),
        fs::read(dir.path().join("b/convergence.csv")).unwrap()
    );
}

#[test]
fn filter_writes_everything() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["filter", "--n", "40"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("out");
    for f in ["report.csv", "snaps.csv", "observations.csv", "truth.csv"] {
        assert!(o.join(f).exists(), "{f}");
    }
    let report = fs::read_to_string(o.join("report.csv")).unwrap();
    assert!(report.starts_with("t,mean_1,mean_2,std_1,std_2,mode_count_axis1,log_evidence\n"));

    // four snapshots, each readable and at a time within half a step of the request
    let snaps = fs::read_to_string(o.join("snaps.csv")).unwrap();
    let shots: Vec<&str> = snaps.lines().filter(|l| l.starts_with("snapshot,")).collect();
    assert_eq!(shots.len(), 4);
    let grid = Grid::new(
        fvm_markov::BoxDomain::cube(2, -std::f64::consts::PI, std::f64::consts::PI).unwrap(),
        vec![40, 40],
        vec![BoundaryCondition::Periodic, BoundaryCondition::Neumann],
    )
    .unwrap();
    let dt = grid.h_min() / (2.0 * std::f64::consts::PI + 1.0);
    for (i, line) in shots.iter().enumerate() {
        let cols: Vec<f64> = line.split(',').skip(1).map(|s| s.parse().unwrap()).collect();
        assert!(cols[2] <= 0.5 * dt + 1e-12);
        let f = fs::File::open(o.join(format!("snapshot_{i:02}.csv"))).unwrap();
        let snap = read_density(BufReader::new(f)).unwrap();
        assert_eq!(snap.t, cols[1]);
        assert_eq!(snap.values.len(), 1600);
    }
}

#[test]
fn filter_observation_files() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("none.csv"), "t,z\n").unwrap();
    let out = run(
        dir.path(),
        &["filter", "--n", "20", "--observations", "file", "--obs_file", "none.csv", "--t_end", "1"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert!(report.lines().skip(1).all(|l| l.ends_with(",0.0000000000000000e0")));

    fs::write(dir.path().join("bad.csv"), "t,z\n1.0,0.2\n0.5,0.1\n").unwrap();
    let out = run(
        dir.path(),
        &["filter", "--n", "20", "--observations", "file", "--obs_file", "bad.csv"],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn impossible_observation_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    // all prior mass in the centre cell; one step later it has moved at most
    // one cell, while z = 3 with σ = 0.01 puts every bit of likelihood near |x₁| = 3
    let grid = std::sync::Arc::new(
        Grid::new(
            fvm_markov::BoxDomain::cube(2, -std::f64::consts::PI, std::f64::consts::PI).unwrap(),
            vec![20, 20],
            vec![BoundaryCondition::Periodic, BoundaryCondition::Neumann],
        )
        .unwrap(),
    );
    let centre = grid.index_of(&[10, 10]).unwrap();
    let p = Density::point_mass(grid, centre).unwrap();
    let mut buf = Vec::new();
    fvm_markov::io::write_density(&mut buf, &p, 0.0).unwrap();
    fs::write(dir.path().join("prior.csv"), buf).unwrap();
    fs::write(dir.path().join("far.csv"), "t,z\n0.05,3\n").unwrap();
    let out = run(
        dir.path(),
        &[
            "filter", "--n", "20", "--prior", "file", "--prior_file", "prior.csv", "--observations", "file",
            "--obs_file", "far.csv", "--sigma", "0.01", "--t_end", "0.1",
        ],
    );
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    for (threads, sub) in [("1", "t1"), ("3", "t3")] {
        let out = run(dir.path(), &["filter", "--n", "30", "--threads", threads, "--out", sub]);
        assert_eq!(code(&out), 0);
    }
    for f in ["report.csv", "observations.csv", "snapshot_03.csv"] {
        assert_eq!(
            fs::read(dir.path().join("t1").join(f)).unwrap(),
            fs::read(dir.path().join("t3").join(f)).unwrap(),
            "{f}"
        );
    }
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ncol_core::config::ScenarioConfig;
use ncol_core::pipeline::{prediction_row, solve_singles, verify_linear, Numerics};
use ncol_core::report::{provenance, to_json, CSV_COLUMNS};
use ncol_core::Vec3;

fn ncol(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncol"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn quick_pair() -> ScenarioConfig {
    let mut c = ScenarioConfig::aligned_pair(0.1);
    c.numerics = Numerics {
        r_out: 32.0,
        radial_ratio: 1.15,
        l_ang: 4,
        energy_tol: 1e-13,
        fit_window: [6.0, 20.0],
        ..Default::default()
    };
    c.rhos = vec![0.04, 0.02, 0.01];
    c.run.deterministic = true;
    c
}

fn write_config(dir: &Path, c: &ScenarioConfig) -> PathBuf {
    let p = dir.join("scenario.toml");
    std::fs::write(&p, c.to_toml().unwrap()).unwrap();
    p
}

#[test]
fn no_arguments_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = ncol(&[], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_subcommand_and_flag() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ncol(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(ncol(&["poisson-check", "--bogus"], dir.path()).status.code(), Some(1));
    assert_eq!(ncol(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = quick_pair();
    c.particles[1].center = Vec3::new(0.5, 0.0, 0.0);
    c.n_inf = Vec3::new(0.0, 0.0, 1.001);
    let p = write_config(dir.path(), &c);
    let out = ncol(&["--config", p.to_str().unwrap(), "single"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("at least 2 apart") && err.contains("normalize"), "{err}");

    std::fs::write(&p, "n_inf = [0, 0, 1\n").unwrap();
    let out = ncol(&["--config", p.to_str().unwrap(), "single"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}

#[test]
fn solver_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = quick_pair();
    c.numerics.max_sweeps = 2;
    let p = write_config(dir.path(), &c);
    let out = ncol(&["--config", p.to_str().unwrap(), "single"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn verify_linear_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let out = ncol(&["verify-linear", "--format", "json", "--deterministic"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let c = ScenarioConfig::aligned_pair(0.1);
    let study = verify_linear(&c.centers(), &[Vec3::z(), Vec3::z()], &c.linear.sigmas, c.linear.l_max).unwrap();
    assert_eq!(out.stdout, to_json(&study, &provenance("")).unwrap());
    assert!(study.slope.unwrap() >= 2.7);
}

#[test]
fn predict_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let c = quick_pair();
    let p = write_config(dir.path(), &c);
    let singles = solve_singles(&c.sweep_input()).unwrap();
    let stored = dir.path().join("singles.json");
    std::fs::write(&stored, to_json(&singles, "x").unwrap()).unwrap();
    let out = ncol(
        &["--config", p.to_str().unwrap(), "--format", "json", "predict", "--input", stored.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<_> = c.rhos.iter().map(|&r| prediction_row(&singles, &c.centers(), r).unwrap()).collect();
    let prov = provenance(&c.to_toml().unwrap());
    assert_eq!(out.stdout, to_json(&rows, &prov).unwrap());
}

#[test]
fn interact_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let c = quick_pair();
    let p = write_config(dir.path(), &c);
    let cfg = p.to_str().unwrap();
    let run = |name: &str| {
        let out = ncol(&["--config", cfg, "--deterministic", "--out", name, "interact"], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(dir.path().join(name)).unwrap()
    };
    let a = run("a.csv");
    let b = run("b.csv");
    assert_eq!(a, b);
    let mut rd = csv::Reader::from_reader(a.as_slice());
    assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), CSV_COLUMNS.to_vec());
    let recs: Vec<_> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(recs.len(), 3);
    assert!(recs.iter().all(|r| r.len() == 11));
}

#[test]
fn snapshots_and_diagnose() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = quick_pair();
    c.particles.truncate(1);
    c.rhos.clear();
    c.numerics.half_width = 4.0;
    c.numerics.h = 0.25;
    c.output.snapshot = Some("one.ncol".into());
    let p = write_config(dir.path(), &c);
    let out = ncol(&["--config", p.to_str().unwrap(), "single"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<_> = std::str::from_utf8(&out.stdout).unwrap().lines().collect();
    assert_eq!(lines.len(), 2);

    let out = ncol(&["diagnose", "one.ncol", "one.ncol", "--rho", "0.01", "--lambda", "1.5"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<_> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "0.0");

    c.numerics.h = 0.125;
    c.output.snapshot = Some("fine.ncol".into());
    let p = write_config(dir.path(), &c);
    assert_eq!(ncol(&["--config", p.to_str().unwrap(), "single"], dir.path()).status.code(), Some(0));
    let out = ncol(&["diagnose", "one.ncol", "fine.ncol", "--rho", "0.01", "--lambda", "1.5"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = ncol(&["diagnose", "missing.ncol", "fine.ncol", "--rho", "0.01"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

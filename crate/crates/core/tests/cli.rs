//! End-to-end runs of the `semiclass` binary on a small configuration.

use std::fs;
use std::path::Path;
use std::process::Command;

use semiclass::config::{ExperimentConfig, Metric};

fn small_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = ExperimentConfig::reference();
    cfg.grid.n_cells = 64;
    cfg.grid.points_per_cell = 8;
    cfg.bands.cutoff = 8;
    cfg.bands.n_bands = 6;
    cfg.sweep.epsilon_ladder = vec![0.4, 0.2, 0.1];
    cfg.sweep.t_list = vec![0.25];
    cfg.sweep.metrics = vec![Metric::Leakage, Metric::OdNorm, Metric::WignerWeak];
    let path = dir.join("small.toml");
    fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_semiclass")).args(args).output().expect("binary runs")
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

#[test]
fn bands_and_flow_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (cfg, out) = (cfg.to_str().unwrap(), dir.path().to_str().unwrap());

    let o = run(&["bands", "--config", cfg, "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let bands = fs::read_to_string(dir.path().join("bands.csv")).unwrap();
    assert_eq!(bands.lines().next(), Some("k,n,E,v,gap_margin"));
    assert_eq!(bands.lines().count(), 1 + 64 * 6);

    let o = run(&["flow", "--config", cfg, "--out", out, "--t-macro", "0.5", "--records", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(header(&dir.path().join("flow.csv")).starts_with("k0,t,"));
}

#[test]
fn evolve_reports_state_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = run(&[
        "evolve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--epsilon",
        "0.2",
        "--t-macro",
        "0.25",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let state = fs::read_to_string(dir.path().join("state.csv")).unwrap();
    assert_eq!(state.lines().next(), Some("x,re,im"));
    assert_eq!(state.lines().count(), 1 + 64 * 8);
    assert!(dir.path().join("diagnostics.csv").exists());
}

#[test]
fn sweep_writes_report_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--plots"]);
    let code = o.status.code().unwrap();
    assert!(code == 0 || code == 2, "exit {code}: {}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(report.lines().next(), Some("metric,epsilon,t,value"));
    assert!(report.lines().any(|l| l.starts_with("leakage,0.1,0.25,")));
    let notes = fs::read_to_string(dir.path().join("report_notes.txt")).unwrap();
    assert!(report.lines().any(|l| l.starts_with("od_norm,0.4,0,")), "{report}\n{notes}");
    assert_eq!(header(&dir.path().join("slopes.csv")), "metric,t,slope,r2");
    assert!(dir.path().join("leakage.svg").exists());
    assert!(dir.path().join("report_notes.txt").exists());
}

#[test]
fn bad_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[lattice]\na = -1.0\n").unwrap();
    let o = run(&["bands", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());
}

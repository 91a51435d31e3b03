//! End-to-end tests of the installed binary: file outputs, determinism,
//! validation failures, and the dump-config round trip.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_drawdown-stop"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawning the binary");
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawning the binary");
    assert!(
        !out.status.success(),
        "command {:?} unexpectedly succeeded",
        args
    );
    out
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

/// A fast simulation section used by every simulate test.
const FAST_SIM: &str = r#""sim": { "dt": 0.01, "n_paths": 500, "probes": [[5.0, 5.0]] }"#;

#[test]
fn dump_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let first = run_ok(&["solve", "--dump-config"]);
    let text = String::from_utf8(first.stdout).unwrap();
    assert!(text.contains("\"mu\": 0.25"), "defaults missing from dump");

    let path = write_config(dir.path(), &text);
    let second = run_ok(&["solve", "--dump-config", "--config", &path]);
    assert_eq!(
        text,
        String::from_utf8(second.stdout).unwrap(),
        "dumped config must re-parse to an identical dump"
    );
}

#[test]
fn solve_writes_curve_turnings_and_scripts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["solve", "--out", out]);

    let csv = read(dir.path(), "lstar.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("s,l_star,v_diag"));
    assert_eq!(lines.count(), 301, "one row per grid point");

    let turned: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "turning_points.json")).unwrap();
    let turns = turned.as_array().unwrap();
    assert_eq!(turns.len(), 2);
    let s0 = turns[0]["s"].as_f64().unwrap();
    let s1 = turns[1]["s"].as_f64().unwrap();
    assert!((s0 - 4.1464).abs() < 0.01, "first turning at {s0}");
    assert!((s1 - 5.1963).abs() < 0.01, "second turning at {s1}");
    assert_eq!(turns[0]["kind"], "cap_detach");
    assert_eq!(turns[1]["kind"], "branch_switch");

    assert!(read(dir.path(), "objective.csv").starts_with("s,z,objective"));
    assert!(read(dir.path(), "lstar.gp").contains("lstar.csv"));
}

#[test]
fn degenerate_solve_range_yields_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "solve": { "s_min": 5.0, "s_max": 5.0, "n_grid": 1 } }"#,
    );
    let out = dir.path().to_str().unwrap();
    run_ok(&["solve", "--config", &cfg, "--out", out]);
    let csv = read(dir.path(), "lstar.csv");
    assert_eq!(csv.lines().count(), 2, "header plus exactly one row");
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "5");
    let l: f64 = row[1].parse().unwrap();
    assert!((l - 0.915551).abs() < 0.005, "l*(5) = {l}");
}

#[test]
fn surface_rows_obey_the_region_payoffs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "surface": { "s_values": [5.0], "n_x": 61, "depth_below": 0.2 } }"#,
    );
    let out = dir.path().to_str().unwrap();
    run_ok(&["surface", "--config", &cfg, "--out", out]);

    let csv = read(dir.path(), "surface.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,s,v_bar,region"));
    let mut seen = [false; 3];
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        let x: f64 = cols[0].parse().unwrap();
        let v: f64 = cols[2].parse().unwrap();
        match cols[3] {
            "stop" => {
                seen[1] = true;
                let g = x.exp();
                assert!(
                    (v - g).abs() <= 1e-12 * g,
                    "stop row at x={x} has value {v}, reward is {g}"
                );
            }
            "ruined" => {
                seen[2] = true;
                assert_eq!(v, 0.0, "no penalty configured, ruined value must be 0");
            }
            "continue" => seen[0] = true,
            other => panic!("unknown region {other}"),
        }
    }
    assert_eq!(seen, [true; 3], "all three regions must appear");
}

#[test]
fn simulate_report_and_curve_are_deterministic() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let cfg_body = format!("{{ {FAST_SIM} }}");
    let cfg_a = write_config(dir_a.path(), &cfg_body);
    let cfg_b = write_config(dir_b.path(), &cfg_body);
    run_ok(&[
        "simulate",
        "--config",
        &cfg_a,
        "--out",
        dir_a.path().to_str().unwrap(),
    ]);
    run_ok(&[
        "simulate",
        "--config",
        &cfg_b,
        "--out",
        dir_b.path().to_str().unwrap(),
    ]);
    assert_eq!(
        read(dir_a.path(), "mc_report.json"),
        read(dir_b.path(), "mc_report.json"),
        "same seed must reproduce the report byte for byte"
    );

    run_ok(&["solve", "--out", dir_a.path().to_str().unwrap()]);
    run_ok(&["solve", "--out", dir_b.path().to_str().unwrap()]);
    assert_eq!(
        read(dir_a.path(), "lstar.csv"),
        read(dir_b.path(), "lstar.csv"),
        "solve output must be stable across runs"
    );
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{{ {FAST_SIM} }}"));
    let out = dir.path().to_str().unwrap();

    run_ok(&["simulate", "--config", &cfg, "--out", out, "--seed", "7"]);
    let with_seven = read(dir.path(), "mc_report.json");
    run_ok(&["simulate", "--config", &cfg, "--out", out, "--seed", "7"]);
    assert_eq!(with_seven, read(dir.path(), "mc_report.json"));

    run_ok(&["simulate", "--config", &cfg, "--out", out, "--seed", "8"]);
    assert_ne!(
        with_seven,
        read(dir.path(), "mc_report.json"),
        "different seed must change the estimates"
    );
}

#[test]
fn thread_count_does_not_change_results() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let cfg_body = format!("{{ {FAST_SIM} }}");
    let cfg_a = write_config(dir_a.path(), &cfg_body);
    let cfg_b = write_config(dir_b.path(), &cfg_body);
    run_ok(&[
        "simulate",
        "--config",
        &cfg_a,
        "--out",
        dir_a.path().to_str().unwrap(),
        "--threads",
        "1",
    ]);
    run_ok(&[
        "simulate",
        "--config",
        &cfg_b,
        "--out",
        dir_b.path().to_str().unwrap(),
        "--threads",
        "4",
    ]);
    assert_eq!(
        read(dir_a.path(), "mc_report.json"),
        read(dir_b.path(), "mc_report.json"),
        "worker count must not affect the estimates"
    );
}

#[test]
fn stop_region_probe_is_exact_with_zero_variance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "sim": { "dt": 0.01, "n_paths": 500, "probes": [[4.05, 5.0]] } }"#,
    );
    let out = dir.path().to_str().unwrap();
    run_ok(&["simulate", "--config", &cfg, "--out", out]);
    let report: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "mc_report.json")).unwrap();
    let probe = &report["probes"][0];
    assert_eq!(probe["region"], "stop");
    assert_eq!(probe["mc_se"], 0.0);
    assert_eq!(probe["gap"], 0.0);
    assert_eq!(probe["pass"], true);
    assert_eq!(probe["mc_mean"], probe["closed_form"]);
    assert_eq!(report["all_pass"], true);
}

#[test]
fn probes_outside_the_domain_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let below = write_config(
        dir.path(),
        r#"{ "sim": { "dt": 0.01, "n_paths": 500, "probes": [[3.5, 5.0]] } }"#,
    );
    let err = run_err(&["simulate", "--config", &below, "--out", out]);
    assert!(
        String::from_utf8_lossy(&err.stderr).contains("ruin boundary"),
        "stderr should name the violated boundary"
    );

    let above = write_config(
        dir.path(),
        r#"{ "sim": { "dt": 0.01, "n_paths": 500, "probes": [[5.5, 5.0]] } }"#,
    );
    run_err(&["simulate", "--config", &above, "--out", out]);
}

#[test]
fn regimes_decompose_the_range_and_report_deleveraging() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{ "deleverage_alpha": 0.8 }"#);
    let out = dir.path().to_str().unwrap();
    run_ok(&["regimes", "--config", &cfg, "--out", out]);
    let report: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "regimes.json")).unwrap();
    let regimes: Vec<&str> = report["intervals"]
        .as_array()
        .unwrap()
        .iter()
        .map(|iv| iv["regime"].as_str().unwrap())
        .collect();
    assert_eq!(regimes, ["cap", "interior", "stop"]);
    let eb = report["effective_boundary"].as_f64().unwrap();
    assert!((eb - 1.5614).abs() < 5e-4, "effective boundary {eb}");

    let bad = write_config(dir.path(), r#"{ "deleverage_alpha": 0.3 }"#);
    let err = run_err(&["regimes", "--config", &bad, "--out", out]);
    assert!(String::from_utf8_lossy(&err.stderr).contains("deleverage_alpha"));
}

#[test]
fn scale_check_passes_for_both_example_models() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["scale-check", "--out", out]);
    let report: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "scale_check.json")).unwrap();
    assert_eq!(report["pass"], true);
    assert!(report["max_rel_err"].as_f64().unwrap() <= 1e-6);

    let brownian = write_config(
        dir.path(),
        r#"{ "model": { "mu": 0.05, "sigma": 0.1, "jumps": null } }"#,
    );
    run_ok(&["scale-check", "--config", &brownian, "--out", out]);
}

#[test]
fn malformed_configs_fail_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{ "unknown_field": 1 }"#);
    let err = run_err(&["solve", "--config", &cfg]);
    assert!(String::from_utf8_lossy(&err.stderr).contains("parsing config"));

    let missing = dir.path().join("absent.json");
    let err = run_err(&["solve", "--config", missing.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&err.stderr).contains("reading config"));
}

use std::process::Command;

use clap::Parser;
use tcpaqm_cli::{effective_config, run, Cli, ResultRecord, RunConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tcpaqm"))
}

fn write_config(dir: &tempfile::TempDir, body: &str) -> String {
    let p = dir.path().join("run.toml");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn record(args: &[&str]) -> ResultRecord {
    let cli = Cli::parse_from(std::iter::once("tcpaqm").chain(args.iter().copied()));
    let out = run(&cli).unwrap();
    ResultRecord::parse(&out.stdout).unwrap()
}

fn num(rec: &ResultRecord, key: &str) -> f64 {
    rec.get(key).unwrap_or_else(|| panic!("missing {key}")).parse().unwrap()
}

#[test]
fn equilibrium_reports_benchmark_operating_point() {
    let rec = record(&["equilibrium"]);
    assert!((num(&rec, "equilibrium.r0_s") - 0.246).abs() < 1e-3);
    assert!((num(&rec, "equilibrium.w0_pkts") - 15.0).abs() < 0.5);
    assert!((num(&rec, "equilibrium.p0") - 0.008).abs() < 1e-3);
    assert!(rec.get("model.a").unwrap().starts_with('['));
}

#[test]
fn target_above_buffer_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "[network]\nn_sessions = 60\ncapacity = 3750\nprop_delay = 0.2\nq_ref = 900\nbuffer = 800\n");
    let out = bin().args(["equilibrium", "--config", &cfg]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid configuration"));
}

#[test]
fn window_below_one_packet_is_a_modeling_error() {
    // so many flows that each window drops under sqrt(2) packets
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "[network]\nn_sessions = 5000\ncapacity = 3750\nprop_delay = 0.2\nq_ref = 175\nbuffer = 800\n");
    let out = bin().args(["equilibrium", "--config", &cfg]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible operating point"));
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(RunConfig::from_toml("[network]\nn_sessions = 60\ncapacity = 3750\nprop_delay = 0.2\nq_ref = 175\nbuffer = 800\nspeed = 1\n").is_err());
    assert!(RunConfig::from_toml("[synthesis]\nmethod = \"dd\"\nbogus = 2\n").is_err());
    assert!(RunConfig::from_toml("[synthesis]\nmethod = \"iod-robust\"\nr = 2\n").is_ok());
}

#[test]
fn non_positive_tolerance_is_rejected() {
    let e = RunConfig::from_toml("[synthesis]\nh_tol = 0.0\n").unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn overrides_change_the_config_hash() {
    let a = effective_config(&Cli::parse_from(["tcpaqm", "synth"])).unwrap();
    let b = effective_config(&Cli::parse_from(["tcpaqm", "synth", "--r", "2", "--seed", "7"])).unwrap();
    assert_eq!(b.synthesis.r, 2);
    assert_eq!(b.seed, 7);
    assert_ne!(tcpaqm_cli::record::config_hash(&a.canonical()), tcpaqm_cli::record::config_hash(&b.canonical()));
}

#[test]
fn robust_iod_synthesis_is_certified_and_oracle_checked() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "[uncertainty]\nr0_min = 0.1\nr0_max = 0.4\n");
    let rec = record(&["synth", "--method", "iod-robust", "--config", &cfg]);
    assert_eq!(rec.get("certificate.count"), Some("8"));
    for i in 0..8 {
        assert!(num(&rec, &format!("certificate[{i}].margin")) >= 1e-7);
    }
    assert_eq!(rec.get("oracle.all_stable"), Some("true"));
    let sampled: Vec<&str> = (0..9).map(|i| rec.get(&format!("oracle[{i}].at")).unwrap()).collect();
    for r0 in ["R0=1e-1", "R0=2.5e-1", "R0=4e-1"] {
        assert!(sampled.contains(&r0), "{sampled:?}");
    }
}

#[test]
fn degenerate_interval_matches_nominal_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let r0 = 175.0 / 3750.0 + 0.2;
    let cfg = write_config(&dir, &format!("[uncertainty]\nr0_min = {r0}\nr0_max = {r0}\n"));
    let robust = record(&["synth", "--method", "iod-robust", "--config", &cfg]);
    let nominal = record(&["synth", "--method", "iod", "--config", &cfg]);
    assert_eq!(robust.get("oracle.all_stable"), Some("true"));
    assert_eq!(nominal.get("oracle.all_stable"), Some("true"));
}

#[test]
fn delay_dependent_synthesis_reaches_half_a_second() {
    let rec = record(&["synth", "--method", "dd", "--r", "2"]);
    assert!(num(&rec, "certificate.h_m_s") >= 0.50);
    assert_eq!(rec.get("oracle.all_stable"), Some("true"));
    let seq: Vec<f64> = rec.get("relaxation.h_sequence").unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!(seq.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn records_are_deterministic() {
    let a = run(&Cli::parse_from(["tcpaqm", "synth", "--method", "dd"])).unwrap().stdout;
    let b = run(&Cli::parse_from(["tcpaqm", "synth", "--method", "dd"])).unwrap().stdout;
    assert_eq!(a, b);
}

#[test]
fn analyze_requires_a_gain() {
    let e = run(&Cli::parse_from(["tcpaqm", "analyze"])).unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn analyze_reports_published_gain_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "[synthesis]\ngain = [-0.3709e-3, 0.0062e-3]\n[uncertainty]\nr0_min = 0.1\nr0_max = 0.4\n");
    let rec = record(&["analyze", "--config", &cfg]);
    assert_eq!(rec.get("method"), Some("iod-robust"));
    assert_eq!(rec.get("oracle.all_stable"), Some("true"));
}

#[test]
fn uncertifiable_gain_exits_with_no_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "[synthesis]\ngain = [0.5, 0.5]\n");
    let out = bin().args(["analyze", "--config", &cfg]).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn simulate_writes_trace_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &dir,
        "[simulation]\nscenario = \"fig1\"\ncontroller = \"state-feedback\"\nhorizon = 20.0\ngain = [-0.589e-3, 0.0244e-3]\n",
    );
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--format", "csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert!(csv.starts_with("t_s,W_pkts,q_pkts,p_prob,R_s\n"));
    assert_eq!(csv.lines().count(), 20_002);
    assert_eq!(String::from_utf8_lossy(&out.stdout), csv);
    let metrics = std::fs::read_to_string(out_dir.join("metrics.txt")).unwrap();
    assert!(metrics.contains("settling_s="));
}

#[test]
fn pi_simulation_needs_no_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "[simulation]\nscenario = \"fig1\"\ncontroller = \"pi\"\nhorizon = 30.0\n");
    let rec = record(&["simulate", "--config", &cfg]);
    assert_eq!(rec.get("controller"), Some("pi"));
    assert!(num(&rec, "metrics.overshoot_pkts") > 0.0);
}

#[test]
fn fig1_reproduction_favors_state_feedback() {
    let dir = tempfile::tempdir().unwrap();
    let rec = record(&["reproduce", "fig1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(rec.get("comparison.k_settles_faster"), Some("true"));
    assert_eq!(rec.get("comparison.k_smaller_overshoot"), Some("true"));
    assert!(dir.path().join("fig1_k.csv").exists());
    assert!(dir.path().join("fig1_pi.csv").exists());
}

#[test]
fn table1_reproduction_recertifies_published_gains() {
    let rec = record(&["reproduce", "table1"]);
    assert_eq!(rec.get("row0.reference.vertices_certified"), Some("8"));
    assert_eq!(rec.get("row1.reference.vertices_certified"), Some("8"));
    assert_eq!(rec.get("row0.ours.status"), Some("certified"));
    assert_eq!(rec.get("row1.ours.status"), Some("certified"));
}

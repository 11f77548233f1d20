use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use waveguide_bec_cli::commands::DYNAMICS_PLOTS;
use waveguide_bec_cli::output::OUT_ENV;
use waveguide_bec_cli::RunConfig;

fn wgbec(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wgbec"));
    cmd.args(args).env_remove(OUT_ENV);
    if let Some(p) = env_out {
        cmd.env(OUT_ENV, p);
    }
    cmd.output().unwrap()
}

fn names(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

const WIDE_CIRCLE: &str = r#"
[geometry]
eps = 0.9

[geometry.curve]
kind = "circle"
radius = 1.0
t_min = 0.0
t_max = 6.283185307179586
"#;

#[test]
fn frame_run_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wgbec(&["frame", "--out", tmp.path().to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let digest = RunConfig::shipped().digest();
    assert_eq!(names(tmp.path()), vec![digest.clone()]);
    let run = tmp.path().join(&digest);
    assert_eq!(names(&run), ["config.json", "plots", "records", "scalars.json", "series"]);
    assert!(!names(&run.join("series")).is_empty());
    assert!(names(&run.join("plots")).iter().all(|n| n.ends_with(".svg")));
    assert_eq!(names(&run.join("records")), ["frame.json"]);

    let record: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(record["subcommand"], "frame");
    assert_eq!(record["digest"], digest.as_str());
    assert_eq!(record["passed"], true);
    let scalars: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("scalars.json")).unwrap()).unwrap();
    assert!(scalars.get("frame").is_some());
    assert!(scalars["frame"].get("wall_seconds").is_none());
    let cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(RunConfig::from_json(&cfg.to_string()).unwrap().digest(), digest);
}

#[test]
fn subcommands_share_one_scalars_file() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_str().unwrap();
    for sub in ["modes", "coeffs"] {
        assert!(wgbec(&[sub, "--out", root], None).status.success());
    }
    let run = tmp.path().join(RunConfig::shipped().digest());
    let scalars: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(run.join("scalars.json")).unwrap()).unwrap();
    assert_eq!(scalars.keys().collect::<Vec<_>>(), ["coeffs", "modes"]);
    let b = scalars["coeffs"]["b"].as_f64().unwrap();
    let q4 = scalars["coeffs"]["chi_quartic"].as_f64().unwrap();
    // unit-mass pair potential: b equals the quartic integral
    assert!((b - q4).abs() < 1e-15);
    // 17 significant digits in every csv cell
    let csv = fs::read_to_string(run.join("series").join(&names(&run.join("series"))[0])).unwrap();
    let cell = csv.lines().nth(1).unwrap().split(',').next().unwrap();
    assert_eq!(cell.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).count(), 17);
}

#[test]
fn output_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(wgbec(&["modes"], Some(tmp.path())).status.success());
    assert!(tmp.path().join(RunConfig::shipped().digest()).join("records/modes.json").exists());
}

#[test]
fn json_and_toml_configs_share_a_digest() {
    let tmp = tempfile::tempdir().unwrap();
    let json = tmp.path().join("c.json");
    fs::write(&json, serde_json::to_string_pretty(&RunConfig::shipped()).unwrap()).unwrap();
    let out = tmp.path().join("out");
    assert!(wgbec(&["modes", "--config", json.to_str().unwrap(), "--out", out.to_str().unwrap()], None).status.success());
    assert_eq!(names(&out), vec![RunConfig::shipped().digest()]);
}

#[test]
fn config_errors_exit_one_and_write_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "modez = 3\n").unwrap();
    let out = tmp.path().join("out");
    let o = out.to_str().unwrap();
    assert_eq!(wgbec(&["coeffs", "--config", bad.to_str().unwrap(), "--out", o], None).status.code(), Some(1));
    fs::write(&bad, "[scaling]\nbeta = 0.4\n").unwrap();
    assert_eq!(wgbec(&["coeffs", "--config", bad.to_str().unwrap(), "--out", o], None).status.code(), Some(1));
    let missing = tmp.path().join("missing.toml");
    assert_eq!(wgbec(&["coeffs", "--config", missing.to_str().unwrap(), "--out", o], None).status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn numerical_failure_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("wide.toml");
    fs::write(&cfg, WIDE_CIRCLE).unwrap();
    let o = wgbec(&["frame", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("out").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("too large"));
}

#[test]
fn converge_writes_every_dynamics_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    fs::write(&cfg, "[converge]\nsites = 4\nparticles = [2, 3]\nt_end = 0.2\ndt = 0.02\nrecords = 2\n").unwrap();
    let out = tmp.path().join("out");
    let o = wgbec(&["converge", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = out.join(RunConfig::load(&cfg).unwrap().digest());
    let plots = names(&run.join("plots"));
    for p in DYNAMICS_PLOTS {
        assert!(plots.contains(&format!("converge_{p}.svg")), "{p} missing from {plots:?}");
    }
    let record: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(record["plots"].as_array().unwrap().len(), plots.len());
}

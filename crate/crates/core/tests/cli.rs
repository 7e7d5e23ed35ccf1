use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn kdvb(args: &[&str], config: Option<&str>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kdvb"));
    cmd.args(args).arg("--output-dir").arg(out);
    cmd.env_remove("KDVB_OUTPUT_DIR");
    if let Some(text) = config {
        let path = out.with_extension("toml");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL: &str = "[domain]\nN = 16\nM = 16\n";

#[test]
fn simulate_from_zero_data_writes_a_zero_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let cfg = format!("{SMALL}[simulate]\ny0 = \"0\"\n");
    let o = kdvb(&["simulate"], Some(&cfg), &out);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = fs::read_to_string(out.join("field.csv")).unwrap();
    let values: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 17 * 17);
    assert!(values.iter().all(|v| *v == 0.0));
    assert!(out.join("config.resolved.toml").exists());
    assert_eq!(
        json(&out.join("norms.json"))["schema"],
        kdvb::io::SCHEMA_VERSION
    );
}

#[test]
fn track_from_the_trajectory_itself_returns_zero_control() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("track");
    let cfg = format!("{SMALL}[track]\nybar0 = \"0.05*sin(2*pi*x)\"\ny0 = \"0.05*sin(2*pi*x)\"\n");
    let o = kdvb(&["track"], Some(&cfg), &out);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = json(&out.join("report.json"));
    assert_eq!(r["iterations"], 1);
    assert_eq!(r["history"].as_array().unwrap().len(), 1);
    assert_eq!(r["control_is_zero"], true);
}

#[test]
fn duality_suite_at_defaults_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("verify");
    let o = kdvb(&["verify", "--suite", "duality"], None, &out);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = json(&out.join("duality.json"));
    assert!(r["max_residual"].as_f64().unwrap() <= 1e-10);
    assert_eq!(r["residuals"].as_array().unwrap().len(), 100);
}

#[test]
fn unknown_key_exits_with_config_error_and_json_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad");
    let o = kdvb(&["simulate"], Some("[domain]\nP = 3\n"), &out);
    assert_eq!(o.status.code(), Some(2));
    let record: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(record["kind"], "error");
    assert_eq!(record["category"], "config");
    assert_eq!(record["exit_code"], 2);
}

#[test]
fn invalid_value_is_recorded_in_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad");
    let o = kdvb(
        &["null-control"],
        Some("[weights]\nomega = [0.6, 0.2]\n"),
        &out,
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&out.join("error.json"))["category"], "config");
}

#[test]
fn divergent_tracking_exits_with_solver_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("diverge");
    let cfg = format!("{SMALL}[track]\ny0 = \"40*sin(2*pi*x)\"\nmaxit = 3\n");
    let o = kdvb(&["track"], Some(&cfg), &out);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(json(&out.join("error.json"))["category"], "solver");
}

#[test]
fn failed_check_exits_with_verification_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("seeded");
    let cfg = format!("{SMALL}[verify]\nduality_samples = 10\nduality_adjoint_nu_shift = 0.01\n");
    let o = kdvb(&["verify", "--suite", "duality"], Some(&cfg), &out);
    assert_eq!(
        o.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = json(&out.join("duality.json"));
    assert!(r["max_residual"].as_f64().unwrap() > 1e-6);
    assert_eq!(json(&out.join("summary.json"))["passed"], false);
}

#[test]
fn same_config_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("seed = 3\n{SMALL}");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = kdvb(&["null-control"], Some(&cfg), out);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    for name in ["control.csv", "state.csv", "report.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn resolved_config_reruns_to_the_same_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let o = kdvb(&["weights-export"], Some(SMALL), &a);
    assert_eq!(o.status.code(), Some(0));
    let echo = fs::read_to_string(a.join("config.resolved.toml")).unwrap();
    let b = dir.path().join("b");
    let o = kdvb(&["weights-export"], Some(&echo), &b);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        fs::read(a.join("weights.csv")).unwrap(),
        fs::read(b.join("weights.csv")).unwrap()
    );
}

#[test]
fn help_documents_config_keys() {
    let o = Command::new(env!("CARGO_BIN_EXE_kdvb"))
        .arg("--help")
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    for key in [
        "nu_tilde",
        "s_target_exponent",
        "clamp",
        "bound_instances",
        "carleman_multipliers",
    ] {
        assert!(text.contains(key), "{key}");
    }
}

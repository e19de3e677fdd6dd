use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fracgame"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn lemmas_on_default_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("lemmas", &configs().join("default.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = fs::read_to_string(dir.path().join("reports.jsonl")).unwrap();
    assert!(lines.lines().count() >= 300);
    let s = summary(dir.path());
    assert_eq!(s["assertion_failures"], 0);
    for l in lines.lines() {
        let r: Value = serde_json::from_str(l).unwrap();
        assert_eq!(r["scenario"], s["scenario"]);
    }
    assert!(dir.path().join("trace.csv").exists());
}

#[test]
fn missing_horizon_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("default.json")).unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, text.replace("  \"T\": 1.0,\n", "")).unwrap();
    let o = run("validate", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line") && err.contains("`T`"), "{err}");
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("default.json")).unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, text.replace("\"theta\"", "\"theeta\"")).unwrap();
    let o = run("lemmas", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("theeta"));
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("blowup.json");
    fs::write(
        &cfg,
        r#"{
  "alpha": 0.9,
  "T": 1.0,
  "grid": { "fine": 16, "decision": 1 },
  "dynamics": {
    "catalog_id": "linear_scalar",
    "params": { "a": 200.0, "b": 0.0, "c": 0.0, "d": 0.0, "e_u": 0.0, "e_v": 0.0,
                "terminal": { "linear": [1.0] } },
    "P": [0], "Q": [0]
  },
  "x0": [1.0]
}"#,
    )
    .unwrap();
    let o = run("simulate", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn zero_dynamics_value_is_terminal_cost_of_freeze() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("zero.json");
    fs::write(
        &cfg,
        r#"{
  "alpha": 0.5,
  "T": 1.0,
  "grid": { "fine": 16, "decision": 2 },
  "dynamics": {
    "catalog_id": "linear_scalar",
    "params": { "a": 0.0, "b": 0.0, "c": 0.0, "d": 0.0, "e_u": 0.0, "e_v": 0.0,
                "terminal": { "linear": [2.0] } },
    "P": [-1, 1], "Q": [-1, 1]
  },
  "library": { "paths": 4, "k": 1.0, "blocks": 4 },
  "x0": [0.5]
}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = run("value", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    let values = s["details"]["values"].as_array().unwrap();
    assert_eq!(values.len(), 5 * 3);
    for v in values {
        let sigma = v["sigma_freeze"].as_f64().unwrap();
        assert_eq!(v["upper"].as_f64().unwrap(), sigma);
        assert_eq!(v["lower"].as_f64().unwrap(), sigma);
    }
}

#[test]
fn reports_do_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("pursuit.json");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for sub in ["value", "viscosity"] {
        run(sub, &cfg, &a, &["--workers", "1"]);
        run(sub, &cfg, &b, &["--workers", "4"]);
        let ra = fs::read(a.join("reports.jsonl")).unwrap();
        assert!(!ra.is_empty());
        assert_eq!(ra, fs::read(b.join("reports.jsonl")).unwrap(), "{sub}");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("default.json");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run("validate", &cfg, &a, &["--seed", "1"]);
    run("validate", &cfg, &b, &["--seed", "2"]);
    let (sa, sb) = (summary(&a), summary(&b));
    assert_eq!(sa["seed"], 1);
    assert_ne!(sa["scenario"], sb["scenario"]);
}

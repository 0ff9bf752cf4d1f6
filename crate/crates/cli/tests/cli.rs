use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_errdist");

const CONFIG: &str = r#"{"version": 1, "scenarios": [
  {"name": "curve", "prior": {"type": "binary", "p": 0.3}, "job": "curve", "sigma": 0.7,
   "grid": {"lo": -3, "hi": 3, "n": 64}},
  {"name": "density", "prior": {"type": "binary", "p": 0.5}, "job": "density", "sigma": 1},
  {"name": "sweep", "prior": {"type": "gaussian", "mean": 0, "std": 1}, "job": "sweep",
   "sigma_grid": {"max": 1, "min": 0.01, "n": 8}, "n": 4, "seed": 7},
  {"name": "oracle", "prior": {"type": "binary", "p": 0.5}, "job": "oracle", "sigma": 0.5,
   "n": 20000, "seed": 3, "tolerance": 0.02}
]}"#;

fn errdist(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().expect("spawn errdist")
}

fn run_config(dir: &Path, threads: &str) -> Vec<(String, Vec<u8>)> {
    let cfg = dir.join("config.json");
    fs::write(&cfg, CONFIG).unwrap();
    let out = dir.join("out");
    let o = errdist(&["--threads", threads, "--out-dir", out.to_str().unwrap(), "run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut files: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn artifacts_do_not_depend_on_thread_count() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let one = run_config(a.path(), "1");
    let eight = run_config(b.path(), "8");
    let names: Vec<&str> = one.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["curve.csv", "density.csv", "oracle.csv", "summary.json", "sweep.csv"]);
    assert_eq!(one, eight);
}

#[test]
fn empty_config_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.json");
    fs::write(&cfg, r#"{"version": 1, "scenarios": []}"#).unwrap();
    let out = dir.path().join("out");
    let o = errdist(&["--out-dir", out.to_str().unwrap(), "run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["scenarios"].as_array().unwrap().len(), 0);
}

#[test]
fn malformed_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\"version\": 1,\n \"scenarios\": [ {\"name\": \"x\", \"bogus\": 1} ]}").unwrap();
    let o = errdist(&["--out-dir", dir.path().join("out").to_str().unwrap(), "run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let missing = errdist(&["run", dir.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn failing_scenario_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("neg.json");
    fs::write(
        &cfg,
        r#"{"version": 1, "scenarios": [
          {"name": "neg", "prior": {"type": "binary", "p": 0.5}, "job": "curve", "sigma": -1}]}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = errdist(&["--out-dir", out.to_str().unwrap(), "run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(out.join("summary.json").exists());
}

#[test]
fn registry_listing() {
    let o = errdist(&["list-registry"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["gaussian", "student_t(3)", "binary-sym", "row-mixture"] {
        assert!(text.contains(name), "{name} missing");
    }
    let o = errdist(&["list-registry", "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.is_object());
}

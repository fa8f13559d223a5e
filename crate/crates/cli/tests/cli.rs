use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SCALING: &str = r#"{"experiment": "scaling",
    "model": {"d": 1, "alpha": 1.5, "L": 128, "rate": {"kind": "linear", "a": 1.0}, "gamma": 1.0},
    "n_grid": [4, 8, 16, 32], "replicas": 100, "master_seed": 41, "sites": 8}"#;

const LCLT: &str = r#"{"experiment": "lclt",
    "model": {"d": 1, "alpha": 1.5, "L": 64, "rate": {"kind": "linear", "a": 1.0}, "gamma": 1.0},
    "master_seed": 1}"#;

fn zrp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zrp")).args(args).current_dir(dir).env_remove("ZRP_SEED").output().unwrap()
}

fn write_plan(dir: &Path, text: &str) -> String {
    let path = dir.join("plan.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(dir.path(), SCALING);
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let missing = zrp(&["verify", "--config", &plan, "--out", out], dir.path());
    assert_eq!(missing.status.code(), Some(1));

    let run = zrp(&["scaling", "--config", &plan, "--out", out], dir.path());
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let ok = zrp(&["verify", "--config", &plan, "--out", out], dir.path());
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));

    let paths = Path::new(out).join("paths.csv");
    let text = fs::read_to_string(&paths).unwrap();
    let doubled: String = text
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if i > 0 && f[2].parse::<f64>().unwrap() == 32.0 {
                format!("{},{},{},{},{}\n", f[0], f[1], f[2], f[3], 10.0 * f[4].parse::<f64>().unwrap())
            } else {
                format!("{line}\n")
            }
        })
        .collect();
    fs::write(&paths, doubled).unwrap();
    let bad = zrp(&["verify", "--config", &plan, "--out", out], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
}

#[test]
fn seed_from_environment_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(dir.path(), SCALING);
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_zrp"))
        .args(["simulate", "--config", &plan, "--out", out.to_str().unwrap()])
        .env("ZRP_SEED", "7")
        .output()
        .unwrap();
    assert!(status.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["plan"]["master_seed"], 7);
    assert_eq!(manifest["complete"], true);
    assert!(out.join("paths.csv").exists());
}

#[test]
fn lclt_csv_output() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(dir.path(), LCLT);
    let out = dir.path().join("out");
    let run = zrp(&["lclt", "--config", &plan, "--out", out.to_str().unwrap(), "--format", "csv"], dir.path());
    assert!(run.status.success());
    let stdout = String::from_utf8(run.stdout).unwrap();
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("s,sup_discrepancy"));
    let sups: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(sups.len(), 3);
    assert!(sups.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn invalid_plan_is_an_execution_error() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(dir.path(), &SCALING.replace("\"sites\"", "\"site\""));
    let run = zrp(&["constants", "--config", &plan], dir.path());
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("site"));
    let none = zrp(&["constants"], dir.path());
    assert_eq!(none.status.code(), Some(1));
}

#[test]
fn constants_json() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(dir.path(), SCALING);
    let run = zrp(&["constants", "--config", &plan, "--out", dir.path().join("c").to_str().unwrap()], dir.path());
    assert!(run.status.success());
    let out = fs::read_to_string(dir.path().join("c").join("constants.json")).unwrap();
    let c: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((c["theta"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
}

use std::path::{Path, PathBuf};
use std::process::Command;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("phe2-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p
}

fn phe2(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_phe2")).args(args).output().unwrap()
}

const LINEAR: &str = r#"{"matrix": [[3,1],[1,2]], "grid": 64, "rotation_iterations": 200,
    "livschitz_samples": 4, "spectral_sweep": 20, "periodic_max": 2}"#;

#[test]
fn all_stages_write_every_file() {
    let dir = scratch("all");
    let cfg = write_config(&dir, LINEAR);
    let out = dir.join("out");
    let o = phe2(&["all", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "manifest.json", "leaves.csv", "periodic_data.csv", "fourier.csv", "fields.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert!(report["alarms"].as_array().unwrap().is_empty());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn single_stage_and_seed_override() {
    let dir = scratch("single");
    let cfg = write_config(&dir, LINEAR);
    let out = dir.join("out");
    let o = phe2(&["certify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "99"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["stages"], serde_json::json!(["certify"]));
    assert!(report["semiconj"].is_null());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 99);
}

#[test]
fn stage_list_adds_dependencies() {
    let dir = scratch("list");
    let cfg = write_config(&dir, LINEAR);
    let out = dir.join("out");
    let o = phe2(&["all", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--stages", "periodic,spectral"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["stages"], serde_json::json!(["certify", "semiconj", "periodic", "spectral"]));
}

#[test]
fn bad_config_exits_with_one() {
    let dir = scratch("bad");
    let cfg = write_config(&dir, r#"{"matrix": [[3,1],[1,2]], "tolerances": {"contraction": -1}}"#);
    let o = phe2(&["certify", "--config", cfg.to_str().unwrap(), "--out", dir.join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tolerances.contraction"));
}

#[test]
fn alarms_exit_with_two() {
    // a fiber threshold below the grid floor makes the fiber evidence contradict the area gate
    let dir = scratch("alarm");
    let cfg = write_config(
        &dir,
        r#"{"matrix": [[3,1],[1,2]], "grid": 64, "tolerances": {"fiber_threshold": 1e-6},
            "perturbation": {"epsilon": 0.05, "direction_mode": "unstable_aligned", "modes": [{"k": [1,0], "cos": 1.0}]}}"#,
    );
    let out = dir.join("out");
    let o = phe2(&["semiconj", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("report.json").exists());
}

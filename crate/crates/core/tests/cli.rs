//! End-to-end runs of the `dwl` binary: exit codes, manifests, reproducibility.

use std::path::Path;
use std::process::Command;

fn dwl(out: &Path, args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_dwl"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env("DWL_THREADS", "1")
        .output()
        .expect("dwl runs")
        .status
        .code()
        .expect("exit code")
}

const SIM: &[&str] = &["simulate", "--coefficient", "preset:mt", "--m", "2", "--lambda", "1", "--t-end", "100"];

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(dwl(out, &["simulate", "--coefficient", "preset:mt", "--m", "2"]), 2);
    assert_eq!(dwl(out, &["simulate", "--coefficient", "preset:mt", "--m", "2", "--lambda", "0", "--polar"]), 2);
    assert_eq!(dwl(out, &["resonance", "--a", "0.5", "--r", "1"]), 2);
    assert_eq!(dwl(out, &["verify", "--suite", "nope"]), 2);
    assert_eq!(dwl(out, &["bogus"]), 2);
}

#[test]
fn simulate_is_reproducible_and_listed_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(dwl(&a, SIM), 0);
    assert_eq!(dwl(&b, SIM), 0);
    let csv_a = std::fs::read(a.join("trajectory.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("trajectory.csv")).unwrap());
    assert!(String::from_utf8(csv_a).unwrap().starts_with("t,u,v,energy\n"));

    let read = |d: &Path| -> serde_json::Value {
        serde_json::from_slice(&std::fs::read(d.join("simulate.manifest.json")).unwrap()).unwrap()
    };
    let (ma, mb) = (read(&a), read(&b));
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    assert_eq!(ma["config_hash"].as_str().unwrap().len(), 64);
    let outputs = ma["outputs"].as_array().unwrap();
    for o in outputs {
        assert!(Path::new(o.as_str().unwrap()).exists(), "{o}");
    }
    assert!(outputs.iter().any(|o| o.as_str().unwrap().ends_with("trajectory.csv")));
    assert!(outputs.iter().any(|o| o.as_str().unwrap().ends_with("plot_simulate.py")));
}

#[test]
fn polar_export_has_polar_header() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SIM.to_vec();
    args.push("--polar");
    assert_eq!(dwl(dir.path(), &args), 0);
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,rho,theta,h,energy\n"));
}

#[test]
fn verify_gamma_passes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(dwl(dir.path(), &["verify", "--suite", "gamma", "--seeds", "1"]), 0);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
}

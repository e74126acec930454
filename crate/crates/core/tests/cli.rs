use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hslab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hslab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn constants_prints_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = hslab(&["constants", "--n", "4", "--s", "1"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("critical_exponent = 3\n"));
    assert!(text.contains("k_opt = "));
    assert!(dir.path().join("manifest.txt").exists());
}

#[test]
fn config_errors_exit_two_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = hslab(&["constants", "--n", "4"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("`s`"));

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "n = 4\ns = 1\nwidth = 2\n").unwrap();
    let o = hslab(&["constants", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("`width`"));

    let o = hslab(&["expansion", "--n", "3", "--s", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let o = hslab(&["sweep", "--n", "4", "--s", "1", "--nodes", "abc"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_supplies_settings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "n = 5\ns = 0.5\n").unwrap();
    let o = hslab(&["constants", "--config", cfg.to_str().unwrap(), "--s", "1"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("n = 5\n") && manifest.contains("s = 1\n"));
}

#[test]
fn bubble_check_passes_its_gates() {
    let dir = tempfile::tempdir().unwrap();
    let o = hslab(&["bubble-check", "--n", "3", "--s", "1", "--nodes", "2048"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert_eq!(manifest.lines().filter(|l| l.starts_with("gate ") && l.ends_with("PASS")).count(), 3);
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn minimize_writes_run_and_profile() {
    let dir = tempfile::tempdir().unwrap();
    let o = hslab(&["minimize", "--n", "4", "--s", "1", "--alpha", "1", "--nodes", "500"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let results = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(results.starts_with("alpha,lambda,mu,"));
    assert!(dir.path().join("profile_1.csv").exists());
}

#[test]
fn flat_sweep_is_reproducible_with_threads() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "sweep", "--model", "flat", "--flat-radius", "10", "--n", "4", "--s", "1", "--alphas", "geom:1:4:4", "--nodes", "500",
    ];
    let mut outputs = Vec::new();
    for (name, jobs) in [("a", "2"), ("b", "2"), ("c", "1")] {
        let out = dir.path().join(name);
        let mut full = args.to_vec();
        full.extend(["--jobs", jobs]);
        let o = hslab(&full, &out);
        assert!(o.status.code() == Some(0) || o.status.code() == Some(1));
        outputs.push(fs::read(out.join("results.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(!outputs[2].is_empty());
}

#[test]
fn expansion_writes_the_fit_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = hslab(&["expansion", "--n", "5", "--s", "1", "--b", "0.2"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(csv.starts_with("eps,theta,I_value,I_minus_K_inv\n"));
    assert_eq!(csv.lines().count(), 6);
    let o = hslab(&["expansion", "--n", "5", "--s", "1", "--eps-ladder", "1,0.5,0.25,0.1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

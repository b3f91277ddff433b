use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn polylab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polylab")).args(args).output().expect("binary runs")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn interface_touching_boundary_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("bad-radius.toml");
    let out = polylab(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("curve.radius") && err.contains("InterfaceTouchesBoundary"), "{err}");
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[grid]\nsizes = [33]\nrefine = true\n");
    let out = polylab(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.refine"));
}

#[test]
fn bad_flags_exit_2() {
    assert_eq!(polylab(&["solve", "--workers", "lots"]).status.code(), Some(2));
    assert_eq!(polylab(&["solve", "--workers", "0"]).status.code(), Some(2));
}

#[test]
fn altcaf_writes_energy_and_profile() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("altcaf.toml");
    let out = polylab(&["altcaf", "--strict", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    for name in ["altcaf_energy.csv", "altcaf_profile.csv", "summary.json", "manifest.json"] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    let energy = std::fs::read_to_string(dir.path().join("altcaf_energy.csv")).unwrap();
    assert!(energy.lines().count() > 100);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS") && !stdout.contains("FAIL"), "{stdout}");
}

#[test]
fn solve_small_grid_with_strict_assertions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[grid]\nsizes = [33, 65]\n\n[problem]\nm = 2\n\n[boundary]\nsource = \"oracle\"\n",
    );
    let out = polylab(&["solve", "--strict", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    for name in ["solve_n33_v0.csv", "solve_n65_v1.csv", "solve_n65_u.svg"] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
}

#[test]
fn failed_assertions_only_fail_in_strict_mode() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[grid]\nsizes = [17, 33, 65]\n\n[assertions]\ncorrector_min_order = 50.0\n";
    let cfg = write_config(dir.path(), text);
    let lax = polylab(&["convergence", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(lax.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&lax.stdout).contains("FAIL"));
    let strict =
        polylab(&["convergence", "--strict", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(strict.status.code(), Some(1));
}

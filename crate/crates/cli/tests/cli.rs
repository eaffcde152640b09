//! End to end checks of the binary: exit codes, output files, determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wavelab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavelab"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

// Small domain, coarse grid, short horizon: fast but still classifiable.
const TINY: &str = "domain_length = 60\npatch_width = 10\nh = 0.5\nt_final = 5\n";

#[test]
fn sweep_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sweep.cfg", &format!("{TINY}c_list = 0.5, 3.0\n"));
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}"));
        let status = wavelab(
            &["sweep", "--config", &cfg, "--out", out.to_str().unwrap()],
            dir.path(),
        );
        assert!(status.status.success(), "{status:?}");
        outputs.push(fs::read(out.join("sweep.csv")).unwrap());
    }
    assert!(!outputs[0].is_empty());
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn unknown_config_key_exits_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "frobnicate = 1\n");
    let out = wavelab(&["sweep", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("frobnicate"), "{stderr}");
}

#[test]
fn missing_config_file_exits_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = wavelab(&["simulate", "--config", "no_such_file.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn numerical_failure_exits_distinctly() {
    let dir = tempfile::tempdir().unwrap();
    // c = 6 overflows the weighted-norm guard on the default domain.
    let cfg = write_config(dir.path(), "fast.cfg", "c_list = 6\nt_final = 2\n");
    let out = wavelab(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(3), "{out:?}");
}

#[test]
fn failed_demonstration_exits_distinctly() {
    let dir = tempfile::tempdir().unwrap();
    // Far too short for either front to establish itself.
    let cfg = write_config(dir.path(), "short.cfg", "t_final = 1\n");
    let out = wavelab(&["bistability", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(4), "{out:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("demo assertion failed"), "{stderr}");
}

#[test]
fn simulate_writes_diagnostics_profile_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sim.cfg", &format!("{TINY}c_list = 0.5\n"));
    let out_dir = dir.path().join("sim");
    let out = wavelab(
        &["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    for name in ["diagnostics.csv", "final_profile.csv", "manifest.txt"] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    let manifest = fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("config_sha256"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("c = 0.5"), "{stdout}");
}

#[test]
fn eigen_reports_the_linear_speed() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("eig");
    let out = wavelab(&["eigen", "--out", out_dir.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    // KPP catalog defaults: the linear speed sits just under 2.
    assert!(stdout.contains("c_lin = 1.9"), "{stdout}");
    let csv = fs::read_to_string(out_dir.join("eigen.csv")).unwrap();
    assert!(csv.lines().count() >= 9, "{csv}");
}

#[test]
fn wave_ladder_emits_branch_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "wave.cfg", "profile = bistable\ntheta = 0.2\nc_list = 0.0, 0.2\n");
    let out_dir = dir.path().join("waves");
    let out = wavelab(
        &["wave", "--config", &cfg, "--out", out_dir.to_str().unwrap()],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let csv = fs::read_to_string(out_dir.join("wave_branch.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with(['c', '#'])).collect();
    assert_eq!(rows.len(), 2, "{csv}");
    for row in rows {
        assert!(row.ends_with("true"), "decay check failed in {row}");
    }
    assert!(out_dir.join("wave_c0.csv").exists());
    assert!(out_dir.join("wave_c0.2.csv").exists());
}

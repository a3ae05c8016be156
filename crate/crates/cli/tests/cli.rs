use std::fs;
use std::path::Path;
use std::process::Command;

fn dyadic() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dyadic"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

const BODY: &str =
    "[lattice]\nspatial_dim = 1\nmax_level = 4\n[model]\nalpha = 1.1\n[span]\nt_end = 0.02\n\
                    [initial]\nkind = \"smooth-random\"\nseed = 8\nsmoothness = 0.5\n";

#[test]
fn run_then_analyze_then_verify() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BODY);
    let out = tmp.path().join("out");
    let status = dyadic()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .args(["--seed", "9", "--workers", "2"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let saved = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(saved.contains("seed = 9"));
    assert!(saved.contains("workers = 2"));

    let report = dyadic()
        .args(["analyze", "--trajectory"])
        .arg(out.join("trajectory.txt"))
        .args(["--badness-constant", "0.1"])
        .output()
        .unwrap();
    assert!(report.status.success());
    let text = String::from_utf8(report.stdout).unwrap();
    assert!(text.contains("bound_check pass"));
    assert!(text.contains("badness_constant 0.1"));

    let verify = dyadic()
        .args(["verify", "--dir"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(verify.status.success());
    assert_eq!(String::from_utf8(verify.stdout).unwrap().trim(), "ok");
}

#[test]
fn cascades_dump_has_one_line_per_triple() {
    let out = dyadic()
        .args(["cascades", "--dim", "3", "--max-level", "2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 64);
    assert!(text.starts_with("j0[0,0,0] j1[0,0,0] j2[0,0,0] "));
}

#[test]
fn bad_config_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[lattice]\nspatial_dim = 4\nmax_level = 2\n");
    let out = dyadic()
        .args(["run", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error:"));
}

#[test]
fn dispersion_preset_writes_its_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BODY);
    let out = tmp.path().join("disp");
    let status = dyadic()
        .args(["run", "--preset", "dispersion", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(out.join("dispersion.csv")).unwrap();
    assert!(csv.starts_with("time,mid_level,mids,mean_normalized_entropy,max_share_deviation\n"));
}

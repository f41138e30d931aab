use std::path::PathBuf;
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trussforge")).args(args).output().unwrap()
}

fn path(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn optimize_one_load_prints_a_truss() {
    let out = run(&["optimize", path(&fixtures().join("one_load.json"))]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["volume"], 1.0);
    assert_eq!(v["bars"].as_array().unwrap().len(), 1);
    assert_eq!(v["provenance"]["phase"], "final");
}

#[test]
fn unbalanced_spec_exits_with_one() {
    let out = run(&["gsm", path(&fixtures().join("invalid/unbalanced.json"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("load case 0"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn schema_and_io_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"dimension": 4, "joints": []}"#).unwrap();
    let out = run(&["optimize", path(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));

    let out = run(&["gsm", path(&dir.path().join("missing.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn files_round_trip_through_the_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let spec = fixtures().join("two_supports.json");
    let gsm = dir.path().join("gsm.json");
    let out = run(&["gsm", path(&spec), "-o", path(&gsm)]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&gsm).unwrap()).unwrap();
    assert_eq!(v["provenance"]["phase"], "gsm");

    let refined = dir.path().join("refined.json");
    assert!(run(&["subdivide", path(&gsm), path(&spec), "-o", path(&refined)]).status.success());
    let w: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&refined).unwrap()).unwrap();
    assert!(w["volume"].as_f64().unwrap() <= v["volume"].as_f64().unwrap());

    let out = run(&["check", path(&refined), path(&spec)]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("case 0: equilibrium residual"), "{text}");
}

#[test]
fn optimize_writes_svg_and_obj() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("t.svg");
    let out = run(&["optimize", path(&fixtures().join("two_bar_fan.json")), "--levels", "0", "--svg", path(&svg)]);
    assert!(out.status.success());
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let truss = dir.path().join("bridge.json");
    let out = run(&["optimize", path(&fixtures().join("bridge_k2.json")), "--levels", "0", "-o", path(&truss)]);
    assert!(out.status.success());
    let obj = std::fs::read_to_string(truss.with_extension("obj")).unwrap();
    assert!(obj.lines().any(|l| l.starts_with("l ")));
    assert!(truss.with_extension("bars.json").exists());
}

#[test]
fn bench_filter_prints_the_matching_fixture() {
    let out = run(&["bench", "--filter", "hemp", "--dir", path(&fixtures())]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().next().unwrap().starts_with("fixture"));
    assert!(text.lines().skip(1).all(|l| l.starts_with("hemp")));
    assert!(text.contains("final") && text.contains("total"));
}

use affine_kit::model::AffineModel;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_affine-kit"));
    cmd.env_remove("AFFINE_KIT_THREADS");
    cmd
}

fn models_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

#[test]
fn transform_prints_the_wishart_value() {
    let model = models_dir().join("wishart1d.json");
    let out = run(&[
        "transform",
        "--model",
        model.to_str().unwrap(),
        "--t",
        "0.5",
        "--u",
        "-1+0j",
        "--x",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let re: f64 = text.trim().split('+').next().unwrap().parse().unwrap();
    assert!((re - 0.428_881_9).abs() < 1e-7, "{text}");
}

#[test]
fn transform_writes_solution_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sol.csv");
    let out = run(&[
        "transform", "--example", "chain_k2", "--t", "1", "--u", "-1", "--x", "0", "--output",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,re_phi,im_phi,re_psi_1,im_psi_1\n"));
    assert!(text.trim_end().ends_with("# status=Complete"));
}

#[test]
fn dumped_models_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["brownian", "wishart1d", "wishart2d", "drift", "chain_k2", "killing"] {
        let path = dir.path().join(format!("{name}.json"));
        let out = run(&[
            "riccati", "--example", name, "--u", "0", "--horizon", "0.1", "--dump-model",
            path.to_str().unwrap(),
        ]);
        assert!(path.exists(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let parsed = AffineModel::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(&parsed, &affine_kit::presets::by_name(name).unwrap());
        let shipped = std::fs::read_to_string(models_dir().join(format!("{name}.json"))).unwrap();
        assert_eq!(AffineModel::from_json(&shipped).unwrap(), parsed);
    }
}

#[test]
fn simulate_is_byte_identical_across_runs_and_threads() {
    let model = models_dir().join("chain_k2.json");
    let args = [
        "simulate",
        "--model",
        model.to_str().unwrap(),
        "--x0",
        "0",
        "--horizon",
        "1",
        "--n-paths",
        "1000",
        "--seed",
        "7",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = bin().args(args).args(["--threads", "4"]).output().unwrap();
    assert_eq!(a.stdout, c.stdout);
    let d = bin().args(args).env("AFFINE_KIT_THREADS", "1").output().unwrap();
    assert_eq!(a.stdout, d.stdout);
}

#[test]
fn simulate_json_summary() {
    let out = run(&[
        "simulate", "--example", "killing", "--x0", "0", "--horizon", "1", "--dt", "0.1", "--n-paths",
        "100", "--format", "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n_paths"], 100);
    assert_eq!(v["times"].as_array().unwrap().len(), 11);
}

#[test]
fn verify_closed_forms_passes() {
    let out = run(&["verify", "--suite", "closed-forms", "--seed", "42"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], true);
    assert!(!v["checks"].as_array().unwrap().is_empty());
}

#[test]
fn oracle_reports_chain_values() {
    let out = run(&["oracle", "--example", "chain_k2", "--t", "1", "--u", "-1", "--x", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let value: f64 = v["value"].as_str().unwrap().split('+').next().unwrap().parse().unwrap();
    assert!((value - 0.360_508_5).abs() < 1e-7);
    assert!(v["matrix_exponential"].is_string());
}

#[test]
fn exit_codes() {
    // validation failure
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let mut m = affine_kit::presets::brownian_1d();
    m.a[(0, 0)] = -1.0;
    std::fs::write(&bad, m.to_json().unwrap()).unwrap();
    let out = run(&["transform", "--model", bad.to_str().unwrap(), "--t", "1", "--u", "1j", "--x", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    // unparsable argument
    assert_eq!(run(&["transform", "--example", "brownian", "--t", "1", "--u", "x", "--x", "0"]).status.code(), Some(1));
    // blow-up
    let out = run(&["transform", "--example", "wishart1d", "--t", "1", "--u", "2", "--x", "1"]);
    assert_eq!(out.status.code(), Some(2));
    // missing file
    let out = run(&["riccati", "--model", "/does/not/exist.json", "--u", "0", "--horizon", "1"]);
    assert_eq!(out.status.code(), Some(3));
    // unwritable output
    let out = run(&[
        "riccati", "--example", "brownian", "--u", "1j", "--horizon", "1", "--output", "/does/not/exist/x.csv",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

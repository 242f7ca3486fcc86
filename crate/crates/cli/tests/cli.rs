use std::path::Path;
use std::process::{Command, Output};

fn labgatr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_labgatr")).args(args).current_dir(cwd).output().unwrap()
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = labgatr(&["selftest"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.json"),
        r#"{"preset": "surface-wss", "dataset": {"toy": {"kind": "surface", "count": 3, "seed": 0}},
            "val_count": 1, "output": "out", "learning_rate": 0.1}"#,
    )
    .unwrap();
    let out = labgatr(&["train", "--config", "run.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}

#[test]
fn generate_then_tokenize() {
    let dir = tempfile::tempdir().unwrap();
    assert!(labgatr(&["generate", "--kind", "volume", "--count", "2", "--out", "data"], dir.path()).status.success());
    assert!(dir.path().join("data/sample_0001.vtk").exists());
    let out = labgatr(
        &["tokenize", "--mesh", "data/sample_0000.vtk", "--ratio", "0.05", "--k", "4", "--out", "tok"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let plan: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("tok/plan.json")).unwrap()).unwrap();
    assert_eq!(plan["k"], 4);
    let histogram = std::fs::read_to_string(dir.path().join("tok/cluster_histogram.csv")).unwrap();
    let clusters: usize =
        histogram.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(clusters, plan["coarse_indices"].as_array().unwrap().len());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("tok/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn mesh_level_eval_writes_agreement_tables() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.json"),
        r#"{"preset": "mesh-scalar",
            "model": {"channels": 4, "heads": 2, "blocks": 1, "epochs": 2},
            "dataset": {"toy": {"kind": "mesh-level", "count": 5, "seed": 2}},
            "val_count": 2, "output": "out"}"#,
    )
    .unwrap();
    let train = labgatr(&["train", "--config", "run.json", "--serial"], dir.path());
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));
    let eval = labgatr(&["eval", "--config", "run.json", "--split", "all"], dir.path());
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    let rows = std::fs::read_to_string(dir.path().join("out/bland_altman.csv")).unwrap();
    assert_eq!(rows.lines().count(), 6);
    let summary = std::fs::read_to_string(dir.path().join("out/bland_altman_summary.csv")).unwrap();
    assert!(summary.starts_with("bias,sd,lower_limit,upper_limit"));
}

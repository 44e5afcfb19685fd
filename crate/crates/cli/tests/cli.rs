use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tlsbpg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tlsbpg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn quick_train(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--episodes",
        "1",
        "--steps",
        "500",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    tlsbpg(&args)
}

#[test]
fn missing_config_names_the_path() {
    let out = tlsbpg(&["train", "--config", "/no/such/config.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/no/such/config.toml"), "{}", stderr(&out));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = tlsbpg(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_sequence_is_a_topology_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let text = tlsbpg::env::DEFAULT_BGS.replace("order = \"1-2-3-4\"", "order = \"1-9-4\"");
    fs::write(&cfg, text).unwrap();
    let out = tlsbpg(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn train_twice_gives_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(quick_train(&a, &[]).status.success());
    assert!(quick_train(&b, &[]).status.success());
    for file in ["metrics.csv", "episodes.csv", "transfer_trace.csv"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["variant"], "mom");
    assert_eq!(manifest["steps_per_episode"], 500);
    assert!(a.join("config.toml").is_file());
}

#[test]
fn manifest_config_reruns_the_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert!(quick_train(&a, &["--variant", "sw", "--seed", "9"]).status.success());
    let b = dir.path().join("b");
    let cfg = a.join("config.toml");
    let out = tlsbpg(&["train", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(b.join("metrics.csv")).unwrap());
}

#[test]
fn eval_reuses_a_stored_policy() {
    let dir = tempfile::tempdir().unwrap();
    let trained = dir.path().join("trained");
    assert!(quick_train(&trained, &[]).status.success());
    let eval = dir.path().join("eval");
    let out = tlsbpg(&[
        "eval",
        "--policy",
        trained.join("maps").to_str().unwrap(),
        "--sequence",
        "1-3-2-4",
        "--steps",
        "500",
        "--out",
        eval.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let episodes = fs::read_to_string(eval.join("episodes.csv")).unwrap();
    assert!(episodes.lines().any(|l| l.starts_with("eval,")));
}

#[test]
fn corrupted_policy_is_a_load_error() {
    let dir = tempfile::tempdir().unwrap();
    let trained = dir.path().join("trained");
    assert!(quick_train(&trained, &[]).status.success());
    fs::write(trained.join("maps").join("vacuum_pump_b.map"), "garbage").unwrap();
    let out = tlsbpg(&[
        "eval",
        "--policy",
        trained.join("maps").to_str().unwrap(),
        "--steps",
        "500",
        "--out",
        dir.path().join("eval").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn ablate_writes_a_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("ablate");
    let out = tlsbpg(&[
        "ablate",
        "--episodes",
        "1",
        "--steps",
        "500",
        "--beta",
        "0.3,0.6",
        "--jobs",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(out_dir.join("comparison.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = tlsbpg(&["verify", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("PASS")));
    assert!(!stdout.lines().any(|l| l.starts_with("FAIL")));
    assert!(dir.path().join("verify.csv").is_file());
}

#[test]
fn similarity_prints_a_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sim");
    let out = tlsbpg(&[
        "similarity",
        "--episodes",
        "1",
        "--steps",
        "500",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out_dir.join("similarity.csv").is_file());
    assert!(out_dir.join("manifest.json").is_file());
}

use std::path::Path;
use std::process::{Command, Output};

fn nes(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nes"))
        .args(args)
        .output()
        .expect("spawn nes")
}

fn train_into(dir: &Path) -> Output {
    nes(&["train", "--seed", "4", "--iterations", "700", "--out", dir.to_str().unwrap()])
}

#[test]
fn train_writes_header_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_into(dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("training.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iteration,reward,avg_reward,loss,epsilon,served"));
    assert_eq!(lines.count(), 700);
    assert!(!csv.contains('\r'));
    assert!(dir.path().join("checkpoint.bin").is_file());
}

#[test]
fn train_is_byte_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(train_into(a.path()).status.success());
    assert!(train_into(b.path()).status.success());
    for f in ["training.csv", "checkpoint.bin"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn eval_reads_the_trained_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train_into(dir.path()).status.success());
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, r#"{"eval_episodes": 2, "horizon": 10}"#).unwrap();
    let out = nes(&[
        "eval",
        "--seed",
        "4",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    assert!(csv.starts_with("policy,mean_reward,mean_reward_per_mu,served_fraction\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"user_count": 0, "d_min": 300, "d_max": 100}"#).unwrap();
    let out = nes(&["train", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(&cfg, "{ not json").unwrap();
    let out = nes(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = nes(&["train", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_pathloss_mode_exits_2() {
    let out = nes(&["train", "--pathloss-mode", "double"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_checkpoint_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = nes(&["eval", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn mismatched_checkpoint_shape_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train_into(dir.path()).status.success());
    let cfg = dir.path().join("two_on.json");
    std::fs::write(&cfg, r#"{"off_gbs": []}"#).unwrap();
    let out = nes(&["eval", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

use std::path::Path;
use std::process::{Command, Output};

fn ecodrive(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecodrive")).args(args).output().unwrap()
}

fn small_config() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/small.toml").display().to_string()
}

#[test]
fn verify_list_names_nine_properties() {
    let out = ecodrive(&["verify", "--list"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| !l.trim().is_empty()).count(), 9, "{text}");
}

#[test]
fn malformed_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "sead = 1\n").unwrap();
    let out = ecodrive(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "solve-dp"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_exits_with_2() {
    let out = ecodrive(&["--config", "/nonexistent/cfg.toml", "gen-scenarios"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_before_solve_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecodrive(&["--config", &small_config(), "--out", dir.path().to_str().unwrap(), "train", "--variant", "ag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_and_train_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_str().unwrap();
    let cfg = small_config();
    for args in [vec!["solve-dp"], vec!["train", "--variant", "ag"], vec!["train", "--variant", "aw"]] {
        let mut full = vec!["--config", cfg.as_str(), "--out", root, "--jobs", "1"];
        full.extend(args);
        let out = ecodrive(&full);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(dir.path().join("nets/ag.nn").is_file());
    assert!(dir.path().join("nets/aw.nn").is_file());
}

#[test]
fn gen_scenarios_writes_loadable_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecodrive(&["--seed", "5", "--out", dir.path().to_str().unwrap(), "gen-scenarios"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let files: Vec<_> = std::fs::read_dir(dir.path().join("scenarios"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    assert!(!files.is_empty());
    for f in files {
        ecodrive::world::Scenario::load(&f).unwrap();
    }
}

use std::process::Command;

fn cylwalk() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cylwalk"))
}

#[test]
fn print_config_emits_a_loadable_spec() {
    let out = cylwalk().args(["verify-theorem", "--print-config", "--seed", "7"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("kind = \"theorem01\""));
    assert!(text.contains("seed = 7"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spec.toml");
    std::fs::write(&path, &text).unwrap();
    let again = cylwalk()
        .args(["simulate", "--print-config", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(again.status.success());
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn a_passing_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = cylwalk()
        .args(["verify-lemma42", "--replicas", "2000", "--threads", "2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("PASS ")));
    assert!(!stdout.lines().any(|l| l.starts_with("FAIL ")));

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
    assert_eq!(json["kind"], "lemma42");
    assert_eq!(json["passed"], true);
    assert_eq!(json["runtime"]["threads"], 2);
    assert!(std::fs::read_dir(dir.path().join("tables")).unwrap().count() > 0);
    assert!(std::fs::read_dir(dir.path().join("plots")).unwrap().count() > 0);
}

#[test]
fn mismatched_kind_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cap.toml");
    std::fs::write(&path, "schema_version = 1\nkind = \"capacity\"\n").unwrap();
    let out = cylwalk().args(["verify-coupling", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("capacity"));
}

#[test]
fn simulate_needs_a_config() {
    let out = cylwalk().arg("simulate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn broken_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "schema_version = 1\nkind = \"nope\"\n").unwrap();
    let out = cylwalk().args(["simulate", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = cylwalk().args(["capacity", "--replicas", "0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

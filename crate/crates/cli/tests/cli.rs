use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_urskit")
}

fn write_action(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn integers(dir: &tempfile::TempDir) -> PathBuf {
    write_action(dir, "int.json", r#"{"kind":"integers"}"#)
}

fn two_cycle(dir: &tempfile::TempDir) -> PathBuf {
    write_action(
        dir,
        "cycle.json",
        r#"{
            "kind": "finite-schreier",
            "symbols": ["a", "a^-1"],
            "inverses": ["a^-1", "a"],
            "vertices": 2,
            "edges": [[0, "a", 1], [1, "a", 0], [0, "a^-1", 1], [1, "a^-1", 0]],
            "base": 0
        }"#,
    )
}

fn grigorchuk(dir: &tempfile::TempDir) -> PathBuf {
    write_action(
        dir,
        "grig.json",
        r#"{
            "kind": "mealy",
            "symbols": ["a", "b", "c", "d"],
            "inverses": ["a", "b", "c", "d"],
            "alphabet": 2,
            "transitions": {
                "e": ["e", "e"], "a": ["e", "e"],
                "b": ["a", "c"], "c": ["a", "d"], "d": ["e", "b"]
            },
            "outputs": {
                "e": [0, 1], "a": [1, 0],
                "b": [0, 1], "c": [0, 1], "d": [0, 1]
            },
            "base": {"prefix": "", "period": "1"}
        }"#,
    )
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "bad json ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

#[test]
fn selftest_on_integers_passes() {
    let dir = tempfile::tempdir().unwrap();
    let action = integers(&dir);
    let out = run(&["selftest", "--action", action.to_str().unwrap(), "--nmax", "4", "--radius", "12"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["outcome"], "PASS");
}

#[test]
fn isotropy_on_two_cycle_reports_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let action = two_cycle(&dir);
    let out = run(&[
        "isotropy", "--action", action.to_str().unwrap(), "--nmax", "4", "--radius", "8",
        "--maxlen", "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    let candidates = doc["candidates"].as_array().unwrap();
    assert!(candidates.iter().any(|c| c["word"] == "a"));
}

#[test]
fn quotient_checks_pass_on_small_systems() {
    let dir = tempfile::tempdir().unwrap();
    for action in [two_cycle(&dir), integers(&dir)] {
        let out = run(&[
            "quotient", "--action", action.to_str().unwrap(), "--nmax", "4", "--maxlen", "3",
            "--radius", "10",
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(stdout_json(&out)["outcome"], "PASS");
    }
}

#[test]
fn norm_reports_certified_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let action = integers(&dir);
    let out = run(&[
        "norm", "--action", action.to_str().unwrap(), "--builtin", "adjacency", "--radius", "40",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_eq!(doc["upper_schur"], 2.0);
    let lower = doc["lower"].as_f64().unwrap();
    assert!(lower > 1.9 && lower <= 2.0);
}

#[test]
fn propa_fail_has_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let action = integers(&dir);
    // linear indicator radius misses the 1/n bound
    let out = run(&[
        "propa", "--action", action.to_str().unwrap(), "--radius", "8",
        "--certified-bound", "0", "check", "--n", "4", "--k", "4",
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["outcome"], "FAIL");
}

#[test]
fn propa_bridge_passes_on_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let action = integers(&dir);
    let out = run(&[
        "propa", "--action", action.to_str().unwrap(), "--radius", "11",
        "--certified-bound", "0", "bridge", "--n", "2", "--k", "8",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_eq!(doc["roundtrip_identity"], true);
    assert_eq!(doc["amenability"]["unit_sums_exactly_one"], true);
}

#[test]
fn witness_documents_roundtrip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let action = integers(&dir);
    let witness_path = dir.path().join("w.json");
    let out = run(&[
        "propa", "--action", action.to_str().unwrap(), "--radius", "10",
        "--certified-bound", "0", "--out", witness_path.to_str().unwrap(),
        "construct", "--n", "2", "--k", "8",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&[
        "propa", "--action", action.to_str().unwrap(), "--radius", "10",
        "--certified-bound", "0", "check", "--witness", witness_path.to_str().unwrap(),
        "--n", "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unsaturated_levels_exit_undecided() {
    let dir = tempfile::tempdir().unwrap();
    let action = grigorchuk(&dir);
    // radius 6 cannot saturate level 6 on the grigorchuk ray
    let out = run(&[
        "quotient", "--action", action.to_str().unwrap(), "--nmax", "6", "--maxlen", "2",
        "--radius", "6",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn classes_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let action = grigorchuk(&dir);
    let args = ["classes", "--action", action.to_str().unwrap(), "--nmax", "3", "--radius", "60"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout, "byte-identical reports");
    let doc = stdout_json(&a);
    assert_eq!(doc["levels"][0]["classes"].as_array().unwrap().len(), 4);
}

#[test]
fn ball_dot_output() {
    let dir = tempfile::tempdir().unwrap();
    let action = integers(&dir);
    let out = run(&[
        "ball", "--action", action.to_str().unwrap(), "--radius", "2", "--format", "dot",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("digraph"));
    assert!(text.contains("doublecircle"));
    assert_eq!(text.matches(" -> ").count(), 4, "five-vertex path");
}

#[test]
fn thread_cap_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let action = grigorchuk(&dir);
    let out = Command::new(bin())
        .env("URSKIT_THREADS", "1")
        .args(["classes", "--action", action.to_str().unwrap(), "--nmax", "3", "--radius", "60"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    // same bytes as the default pool: determinism does not depend on threads
    let default = run(&["classes", "--action", action.to_str().unwrap(), "--nmax", "3", "--radius", "60"]);
    assert_eq!(out.stdout, default.stdout);
}

#[test]
fn bad_input_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_action(&dir, "bad.json", "{\"kind\":\"nope\"}");
    let out = run(&["classes", "--action", bad.to_str().unwrap(), "--nmax", "2", "--radius", "4"]);
    assert_eq!(out.status.code(), Some(3));
    let out = run(&["classes", "--action", "/nonexistent.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn basecheck_agrees_across_two_cycle_bases() {
    let dir = tempfile::tempdir().unwrap();
    let a = two_cycle(&dir);
    let b = write_action(
        &dir,
        "cycle1.json",
        r#"{
            "kind": "finite-schreier",
            "symbols": ["a", "a^-1"],
            "inverses": ["a^-1", "a"],
            "vertices": 2,
            "edges": [[0, "a", 1], [1, "a", 0], [0, "a^-1", 1], [1, "a^-1", 0]],
            "base": 1
        }"#,
    );
    let out = run(&[
        "basecheck", "--action", a.to_str().unwrap(), "--other", b.to_str().unwrap(),
        "--nmax", "3", "--radius", "8",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

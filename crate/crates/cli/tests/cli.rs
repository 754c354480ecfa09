use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ptree(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptree"))
        .args(args)
        .current_dir(dir)
        .env_remove("PTREE_OUT_DIR")
        .output()
        .expect("spawn ptree")
}

fn summary(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join(format!("out/{name}.summary.json"))).unwrap()).unwrap()
}

#[test]
fn bundled_run_is_clean() {
    let d = tempfile::tempdir().unwrap();
    let o = ptree(&["run-engine", "--bundled", "full-S-no-splits", "--horizon", "400", "--dot-stage", "50"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(d.path(), "full-S-no-splits");
    assert_eq!(s["violations"], serde_json::json!([]));
    assert!(!s["ht"].as_object().unwrap().is_empty());
    assert!(d.path().join("out/full-S-no-splits.tpath-50.dot").exists());
}

#[test]
fn non_tree_table_is_a_validation_error() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("bad.json"), r#"{"schema":1,"kind":"engine","config":{"s_table":["","0 1"]}}"#).unwrap();
    let o = ptree(&["run-engine", "bad.json"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("prefixes"));
    assert!(!d.path().join("out").exists());
}

#[test]
fn malformed_config_reports_position() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("s.json"), "{\"schema\":1,\n\"kind\":\"split\",\"config\":{\"depth\":\"x\"}}").unwrap();
    let o = ptree(&["run-split", "s.json"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("s.json:2:"));
    fs::write(d.path().join("v.json"), r#"{"schema":9,"kind":"split"}"#).unwrap();
    assert_eq!(ptree(&["run-split", "v.json"], d.path()).status.code(), Some(2));
}

#[test]
fn runs_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = ptree(&["run-engine", "--bundled", "oscillating", "--horizon", "300", "--out-dir", out], d.path());
        assert_eq!(o.status.code(), Some(0));
    }
    let a = fs::read(d.path().join("a/oscillating.trace.jsonl")).unwrap();
    let b = fs::read(d.path().join("b/oscillating.trace.jsonl")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn check_reproduces_the_verdict() {
    let d = tempfile::tempdir().unwrap();
    let o = ptree(&["run-engine", "--bundled", "dead-node", "--horizon", "300"], d.path());
    let code = o.status.code();
    let c = ptree(&["check", "out/dead-node.trace.jsonl"], d.path());
    assert_eq!(c.status.code(), code);

    // a check scenario points at the same trace
    fs::write(d.path().join("c.json"), r#"{"schema":1,"kind":"check","trace":"out/dead-node.trace.jsonl"}"#).unwrap();
    assert_eq!(ptree(&["check", "c.json"], d.path()).status.code(), code);

    // a tampered trace is caught
    let p = d.path().join("out/dead-node.trace.jsonl");
    let text = fs::read_to_string(&p).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.truncate(lines.len() / 2);
    let bad = lines.iter().map(|l| l.replacen("\"stage\":", "\"stage\":9", 1)).collect::<Vec<_>>().join("\n");
    fs::write(&p, bad).unwrap();
    assert_ne!(ptree(&["check", "out/dead-node.trace.jsonl"], d.path()).status.code(), Some(0));
}

#[test]
fn env_sets_the_output_directory() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ptree"))
        .args(["run-split", "--depth", "2"])
        .current_dir(d.path())
        .env("PTREE_OUT_DIR", "elsewhere")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("elsewhere/split.trace.jsonl").exists());
    let c = ptree(&["check", "elsewhere/split.trace.jsonl"], d.path());
    assert_eq!(c.status.code(), Some(0));
}

#[test]
fn fsplit_scenarios_run_and_abort() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("f.json"),
        r#"{"schema":1,"kind":"fsplit","source":{"kind":"full","branching":4,"depth":12},
            "oracle":{"kind":"one_sided"},"config":{"depth":3,"width":4}}"#,
    )
    .unwrap();
    let o = ptree(&["run-fsplit", "f.json"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("out/f.result.json")).unwrap()).unwrap();
    assert_eq!(r["unsplit_siblings"], serde_json::json!([]));

    // too wide for the reach: the construction aborts with a diagnostic
    fs::write(
        d.path().join("g.json"),
        r#"{"schema":1,"kind":"fsplit","source":{"kind":"full","branching":4,"depth":3},
            "oracle":{"kind":"direct"},"config":{"depth":1,"width":6,"reach":1}}"#,
    )
    .unwrap();
    let o = ptree(&["run-fsplit", "g.json"], d.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(!o.stderr.is_empty());
}

#[test]
fn tower_scenario_writes_deterministic_json() {
    use ptree_core::approx::StagedTree;
    use ptree_core::ordinals::Notation;
    use ptree_core::tower::TowerConfig;
    use ptree_core::trees::Tree;

    let d = tempfile::tempdir().unwrap();
    let cfg = TowerConfig {
        alpha: Notation::OMEGA,
        top: StagedTree::total(Tree::full(3, 3)),
        levels: vec![Notation::fin(0), Notation::fin(2), Notation::fin(4)],
        horizon: 200,
        depth: 3,
        max_branch: 3,
        max_depth: 2,
    };
    let sc = serde_json::json!({ "schema": 1, "kind": "tower", "config": cfg });
    fs::write(d.path().join("t.json"), sc.to_string()).unwrap();
    for out in ["a", "b"] {
        let o = ptree(&["run-tower", "t.json", "--out-dir", out], d.path());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(d.path().join("a/t.tower.json")).unwrap();
    assert_eq!(a, fs::read(d.path().join("b/t.tower.json")).unwrap());
}

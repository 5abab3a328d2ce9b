use std::fs;
use std::process::{Command, Output};

fn fitpa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fitpa")).args(args).output().unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let out = out.to_str().unwrap();
    assert_eq!(fitpa(&["generate", "--gen", "urn", "--n", "5", "--out", out]).status.code(), Some(2));
    assert_eq!(fitpa(&["couple", "--n-grid", "100", "--reps", "0", "--seed", "1", "--out", out]).status.code(), Some(2));
    assert_eq!(
        fitpa(&["degree", "--n", "10", "--reps", "5", "--k-max", "5", "--seed", "1", "--out", out, "--model", "{\"kind\":\"nope\"}"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn local_limit_rows_follow_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ll.csv");
    let status = fitpa(&[
        "local-limit", "--n-grid", "50,200,400", "--r", "0", "--reps", "50", "--seed", "3", "--out",
        out.to_str().unwrap(),
    ])
    .status;
    assert!(status.success());
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let tv: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(tv, 0.0);
    }
    let meta = fs::read_to_string(format!("{}.meta.json", out.display())).unwrap();
    let meta: serde_json::Value = serde_json::from_str(&meta).unwrap();
    assert_eq!(meta["command"], "local-limit");
    assert_eq!(meta["config"]["seed"], 3);
}

use std::path::Path;
use std::process::{Command, Output};

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contactiso"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("spawn")
}

#[test]
fn dataset_and_eval_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = run(d, &["--seed", "5", "gen-dataset", "--n", "70", "--name", "ideal"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = std::fs::read(a.join("ideal.csv")).unwrap();
    assert_eq!(csv, std::fs::read(b.join("ideal.csv")).unwrap());
    assert_eq!(
        std::fs::read(a.join("ideal.meta.json")).unwrap(),
        std::fs::read(b.join("ideal.meta.json")).unwrap()
    );
    assert_eq!(String::from_utf8_lossy(&csv).lines().count(), 71);

    let data = a.join("ideal.csv");
    let o = run(&a, &["eval", "--classifier", "dt", "--dataset", data.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("accuracy"));
    assert!(a.join("eval_confusion.csv").exists() && a.join("eval_confusion.svg").exists());
}

#[test]
fn bad_arguments_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["eval", "--classifier", "fnn", "--dataset", "missing.csv"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["--model", "missing.toml", "gen-dataset", "--n", "7"]).status.code(), Some(2));
}

#[test]
fn unreachable_pose_exits_with_runtime_code() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("far.json");
    std::fs::write(&scenario, r#"{"x_d": [3.0, 0.0, 0.0]}"#).unwrap();
    let o = run(dir.path(), &["pf", "--scenario", scenario.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

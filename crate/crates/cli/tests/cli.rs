use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_anova-gp"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        r#"
seed = 7
n_test = 10

[problem]
kind = "analytic"
name = "polynomial-mix"
m = 3
output_dim = 12

[decomposition]
nodes_per_dim = 3

[training]
n_train = 8
pool_size = 60

[sgp.gp]
restarts = 2
max_iters = 50
"#,
    )
    .unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn bad_config_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "seed = 1\n[training]\nn_train = 0\n").unwrap();
    let o = run(&["decompose", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["kind"], "config");

    let o = run(&["decompose", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(&path, "bogus_key = 3\n").unwrap();
    let o = run(&["decompose", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn decompose_prints_term_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = run(&["decompose", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("order,candidates,selected"));
    // The third first-order term is linear about the anchor, so its mean
    // and hence its weight vanish.
    assert_eq!(lines.next(), Some("1,3,2"));
    assert_eq!(lines.next(), Some("2,1,1"));

    let o = run(&["decompose", "--config", cfg.to_str().unwrap(), "--format", "json"]);
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(doc["simulator_calls"].as_u64().unwrap() > 0);
}

#[test]
fn benchmark_writes_artifacts_and_archives_answer_queries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let o = run(&["benchmark", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("method,min,q1,median,q3,max,undefined"));
    assert!(text.contains("anova-gp,"));
    assert!(text.contains("s-gp,"));
    for f in ["errors.csv", "report.json", "anova_gp.json", "sgp.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let errors = std::fs::read_to_string(out.join("errors.csv")).unwrap();
    // Header plus one row per test point and method.
    assert_eq!(errors.lines().count(), 21);

    let points = dir.path().join("points.csv");
    std::fs::write(&points, "x1,x2,x3\n0.5,0.5,0.5\n0.1,0.9,0.3\n").unwrap();
    let archive = out.join("anova_gp.json");
    let o = run(&[
        "predict",
        "--emulator",
        archive.to_str().unwrap(),
        "--config",
        points.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 3);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 13);

    let json_points = dir.path().join("points.json");
    std::fs::write(&json_points, r#"{"points": [[0.5, 0.5, 0.5], [0.1, 0.9, 0.3]]}"#).unwrap();
    let o = run(&[
        "predict",
        "--emulator",
        archive.to_str().unwrap(),
        "--config",
        json_points.to_str().unwrap(),
        "--format",
        "json",
    ]);
    let from_json: Vec<Vec<f64>> = serde_json::from_slice(&o.stdout).unwrap();
    let from_csv: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(from_json, from_csv);

    let o = run(&["inspect", "--emulator", archive.to_str().unwrap(), "--format", "json"]);
    assert!(o.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["kind"], "anova-gp");
    assert_eq!(doc["input_dim"], 3);

    let o = run(&["inspect", "--emulator", out.join("sgp.json").to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("index,modes,training_points\nall,"));

    // Wrong point dimension is a dimension error, not a config error.
    std::fs::write(&points, "0.5,0.5\n").unwrap();
    let o = run(&[
        "predict",
        "--emulator",
        archive.to_str().unwrap(),
        "--config",
        points.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["kind"], "dimension-mismatch");
}

#[test]
fn train_requires_an_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = run(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let out = dir.path().join("models");
    let o = run(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("anova_gp.json").exists());
    assert!(out.join("sgp.json").exists());
    assert!(stdout(&o).starts_with("index,modes,training_points"));
}

#[test]
fn corrupt_archive_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    std::fs::write(&path, r#"{"schema":"something-else","version":1,"model":{}}"#).unwrap();
    let o = run(&["inspect", "--emulator", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(err["kind"] == "archive" || err["kind"] == "json", "{err}");
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_profile-sentinel"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn example_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/grid.json")
}

/// Small generated corpus plus its embeddings.
fn small_corpus(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let gen = dir.join("gen");
    let out = run(&["generate", "--scale", "0.05", "--seed", "11", "--out", s(&gen)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let emb = dir.join("emb");
    let out = run(&[
        "embed",
        "--corpus",
        s(&gen.join("corpus.jsonl")),
        "--word-vectors",
        s(&gen.join("word_vectors.txt")),
        "--out",
        s(&emb),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (
        gen.join("corpus.jsonl"),
        gen.join("word_vectors.txt"),
        emb.join("embeddings.jsonl"),
    )
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn scenario_on_example_config_writes_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("results");
    let o = run(&["scenario", "--config", s(&example_config()), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let grid = fs::read_to_string(out.join("grid.csv")).unwrap();
    assert!(grid.starts_with("train_scenario,test_subset,"));
    // four scenarios times four test subsets
    assert_eq!(grid.lines().count(), 1 + 16);
    let m = manifest(&out);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["command"], "scenario");
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = run(&["scenario", "--out", "unused"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = run(&["generate", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_then_report_emits_svg_and_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let (corpus, _, emb) = small_corpus(tmp.path());
    let trained = tmp.path().join("train");
    let o = run(&[
        "train",
        "--corpus",
        s(&corpus),
        "--embeddings",
        s(&emb),
        "--classifier",
        "logreg",
        "--out",
        s(&trained),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(trained.join("model.json").exists());
    assert!(trained.join("predictions.csv").exists());

    let rep = tmp.path().join("report");
    let o = run(&["report", "--from", s(&trained), "--out", s(&rep)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files: Vec<PathBuf> = manifest(&rep)["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| PathBuf::from(v.as_str().unwrap()))
        .collect();
    assert!(files.iter().any(|f| f.extension().is_some_and(|e| e == "svg")));
    assert!(files.iter().any(|f| f.extension().is_some_and(|e| e == "csv")));
    assert!(files.iter().all(|f| f.exists()));
}

#[test]
fn failure_reports_json_and_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run(&[
        "train",
        "--corpus",
        s(&tmp.path().join("absent.jsonl")),
        "--word-vectors",
        "absent.txt",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(o.stderr.trim_ascii()).expect("error is JSON");
    assert_eq!(err["error"]["kind"], "io");
    let m = manifest(&out);
    assert_eq!(m["status"], "failed");
    assert!(m["error"].as_str().unwrap().contains("absent.jsonl"));
}

#[test]
fn bad_config_value_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("grid.json");
    fs::write(
        &cfg,
        r#"{"scenarios":[],"layouts":["fused"],"classifiers":["gbdt"],"seed":1,"scale":0.1}"#,
    )
    .unwrap();
    let o = run(&["scenario", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"]["kind"], "config");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for i in 0..2 {
        let out = tmp.path().join(format!("run{i}"));
        let o = run(&[
            "all",
            "--scale",
            "0.05",
            "--seed",
            "5",
            "--jobs",
            &(i + 1).to_string(),
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        dirs.push(out);
    }
    for rel in [
        "data/corpus.jsonl",
        "data/word_vectors.txt",
        "data/gen_report.json",
        "data/embeddings.jsonl",
        "results/grid.csv",
        "results/cells.json",
        "results/bundle.json",
        "reports/grid.csv",
    ] {
        let a = fs::read(dirs[0].join(rel)).unwrap();
        let b = fs::read(dirs[1].join(rel)).unwrap();
        assert!(a == b, "{rel} differs between runs");
    }
}

#[test]
fn validate_flags_duplicates_without_touching_input() {
    let tmp = tempfile::tempdir().unwrap();
    let (corpus, _, _) = small_corpus(tmp.path());
    let text = fs::read_to_string(&corpus).unwrap();
    let first = text.lines().next().unwrap();
    let dup = tmp.path().join("dup.jsonl");
    fs::write(&dup, format!("{text}{first}\n")).unwrap();
    let before = fs::read(&dup).unwrap();

    let out = tmp.path().join("val");
    let o = run(&["validate", "--corpus", s(&dup), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let diag: Value = serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["duplicate_ids"].as_array().unwrap().len(), 1);
    assert_eq!(fs::read(&dup).unwrap(), before);

    let o = run(&["validate", "--corpus", s(&corpus), "--out", s(&out)]);
    assert!(o.status.success());
}

#[test]
fn tune_writes_log_and_best_params() {
    let tmp = tempfile::tempdir().unwrap();
    let (corpus, vectors, _) = small_corpus(tmp.path());
    let before = fs::read(&corpus).unwrap();
    let out = tmp.path().join("tune");
    let o = run(&[
        "tune",
        "--corpus",
        s(&corpus),
        "--word-vectors",
        s(&vectors),
        "--layout",
        "numeric",
        "--classifier",
        "knn",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(out.join("tuning_log.csv")).unwrap();
    // header plus both BO stages
    assert_eq!(log.lines().count(), 1 + 50);
    let best: Value = serde_json::from_str(&fs::read_to_string(out.join("best_params.json")).unwrap()).unwrap();
    assert_eq!(best["stage"], "bo_stage2");
    assert_eq!(fs::read(&corpus).unwrap(), before);
}

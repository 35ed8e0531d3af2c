//! End-to-end tests of the command-line binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_emotex"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary should spawn");
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

/// synth + prepare into `root`, returning (prep_dir, data_dir).
fn make_corpus(root: &Path, raw: usize, seed: u64) -> (PathBuf, PathBuf) {
    let data = root.join("data");
    let prep = root.join("prep");
    run_ok(&[
        "synth",
        "--out-dir",
        &s(&data),
        "--raw",
        &raw.to_string(),
        "--benchmark",
        "60",
        "--seed",
        &seed.to_string(),
    ]);
    run_ok(&[
        "prepare",
        "--raw",
        &s(&data.join("raw.jsonl")),
        "--lexicon",
        &s(&data.join("lexicon.json")),
        "--out-dir",
        &s(&prep),
        "--seed",
        &seed.to_string(),
    ]);
    (prep, data)
}

#[test]
fn prepare_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (prep1, _) = make_corpus(&dir.path().join("a"), 400, 3);
    let (prep2, _) = make_corpus(&dir.path().join("b"), 400, 3);
    for name in ["train.jsonl", "val.jsonl", "test.jsonl", "stats.json"] {
        let x = std::fs::read(prep1.join(name)).unwrap();
        let y = std::fs::read(prep2.join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between identical runs");
    }
}

#[test]
fn prepare_stats_cover_every_class() {
    let dir = tempfile::tempdir().unwrap();
    let (prep, _) = make_corpus(dir.path(), 400, 5);
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(prep.join("stats.json")).unwrap())
            .unwrap();
    let counts = stats["class_counts"].as_object().unwrap();
    for class in ["happy_active", "happy_inactive", "unhappy_active", "unhappy_inactive"] {
        assert!(counts[class].as_u64().unwrap() > 0, "no {class} items");
    }
    assert!(stats["dropped"]["retweets"].as_u64().unwrap() > 0);
}

#[test]
fn missing_lexicon_path_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.jsonl");
    std::fs::write(&raw, "{\"id\":\"1\",\"text\":\"hello #x\"}\n").unwrap();
    let missing = dir.path().join("no-such-lexicon.json");
    let out = bin()
        .args([
            "prepare",
            "--raw",
            &s(&raw),
            "--lexicon",
            &s(&missing),
            "--out-dir",
            &s(&dir.path().join("out")),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("no-such-lexicon.json"),
        "stderr should name the missing file: {stderr}"
    );
}

#[test]
fn frozen_finetune_reports_unchanged_encoder() {
    let dir = tempfile::tempdir().unwrap();
    let (prep, _) = make_corpus(dir.path(), 300, 9);
    let out = run_ok(&[
        "finetune",
        "--train",
        &s(&prep.join("train.jsonl")),
        "--val",
        &s(&prep.join("val.jsonl")),
        "--out-dir",
        &s(&dir.path().join("ft")),
        "--mode",
        "frozen",
        "--epochs",
        "1",
        "--seed",
        "9",
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("encoder unchanged: true"),
        "missing hash check line: {stderr}"
    );
    assert!(dir.path().join("ft/bundle/manifest.json").exists());
    assert!(dir.path().join("ft/history.json").exists());
}

#[test]
fn sweep_writes_one_row_per_batch_size() {
    let dir = tempfile::tempdir().unwrap();
    let (prep, _) = make_corpus(dir.path(), 300, 13);
    let csv_path = dir.path().join("sweep.csv");
    run_ok(&[
        "sweep",
        "--train",
        &s(&prep.join("train.jsonl")),
        "--val",
        &s(&prep.join("val.jsonl")),
        "--test",
        &s(&prep.join("test.jsonl")),
        "--out-dir",
        &s(&dir.path().join("sweep")),
        "--batch-sizes",
        "50,100",
        "--epochs",
        "1",
        "--seed",
        "13",
        "--out",
        &s(&csv_path),
    ]);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "batch_size,val_micro_f,test_micro_f");
    assert!(lines[1].starts_with("50,"));
    assert!(lines[2].starts_with("100,"));
}

#[test]
fn evaluate_empty_benchmark_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let (prep, data) = make_corpus(dir.path(), 300, 17);
    run_ok(&[
        "finetune",
        "--train",
        &s(&prep.join("train.jsonl")),
        "--val",
        &s(&prep.join("val.jsonl")),
        "--out-dir",
        &s(&dir.path().join("ft")),
        "--epochs",
        "1",
        "--seed",
        "17",
    ]);
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let out = bin()
        .args([
            "evaluate",
            "--model",
            &s(&dir.path().join("ft/bundle")),
            "--benchmark",
            &s(&empty),
            "--out-dir",
            &s(&dir.path().join("eval")),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    // the real benchmark still works with the same bundle
    run_ok(&[
        "evaluate",
        "--model",
        &s(&dir.path().join("ft/bundle")),
        "--benchmark",
        &s(&data.join("benchmark.jsonl")),
        "--out-dir",
        &s(&dir.path().join("eval")),
    ]);
    let csv = std::fs::read_to_string(dir.path().join("eval/report.csv")).unwrap();
    assert!(csv.starts_with("class,precision,recall,f1,support\n"));
    assert!(csv.contains("\njoy,") || csv.starts_with("joy,") || csv.contains("joy,"));
    assert!(csv.contains("anger,"));
    assert!(csv.contains("sadness,"));
    assert!(csv.contains("micro_avg,"));
}

#[test]
fn ablate_writes_curve_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let (prep, _) = make_corpus(dir.path(), 300, 21);
    run_ok(&[
        "ablate",
        "--train",
        &s(&prep.join("train.jsonl")),
        "--val",
        &s(&prep.join("val.jsonl")),
        "--test",
        &s(&prep.join("test.jsonl")),
        "--out-dir",
        &s(&dir.path().join("abl")),
        "--sizes",
        "40,120",
        "--epochs",
        "1",
        "--seed",
        "21",
        "--svg",
    ]);
    let csv = std::fs::read_to_string(dir.path().join("abl/curve.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "size,micro_f");
    assert!(lines[1].starts_with("40,"));
    assert!(lines[2].starts_with("120,"));
    let svg = std::fs::read_to_string(dir.path().join("abl/curve.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("polyline"));
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = bin().args(["finetune", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use passgauge::analytics::{emit_report, DatasetReport, ReportFormat};
use passgauge::corpus::read_tsv;
use passgauge::learn::grid::{read_score_table, GridSpec};
use passgauge::scoring::score;
use passgauge::synth::{generate, CorpusPreset};
use passgauge::{ModelFile, ModelKind};
use serde_json::Value;
use tempfile::TempDir;

fn passgauge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_passgauge"))
        .args(args)
        .current_dir(dir)
        .env_remove("SOURCE_DATE_EPOCH")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = passgauge(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// synth -> featurize -> split in a fresh directory.
fn prepared() -> TempDir {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["synth", "forum1", "--size", "5000", "--out", "corpus.tsv"]);
    ok(d, &["featurize", "corpus.tsv", "--out", "features.csv"]);
    ok(d, &["split", "features.csv", "--out-dir", "splits"]);
    dir
}

#[test]
fn pipeline_end_to_end() {
    let dir = prepared();
    let d = dir.path();
    let corpus = read_tsv(&fs::read(d.join("corpus.tsv")).unwrap()[..]).unwrap();
    let preset = CorpusPreset { size: 5000, ..CorpusPreset::builtin("forum1").unwrap() };
    assert_eq!(corpus, generate(&preset).unwrap());

    let stats = ok(d, &["stats", "corpus.tsv", "--id", "forum1"]);
    let report = DatasetReport::build("forum1", &corpus, 10).unwrap();
    assert_eq!(stats.stdout, emit_report(&report, ReportFormat::Json).unwrap());

    let out = ok(d, &["train", "--model", "lr", "--train", "splits/train.csv", "--out", "lr.json"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed: 42"));
    let model = ModelFile::from_json(&fs::read(d.join("lr.json")).unwrap()).unwrap();
    assert_eq!(model.model_kind, ModelKind::LogReg);
    assert_eq!(model.training_metadata.seed, 42);
    assert!(model.training_metadata.timestamp.is_none());

    let eval = ok(d, &["evaluate", "--model", "lr.json", "--data", "splits/test.csv"]);
    let text = String::from_utf8(eval.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("model_kind,rows,accuracy,recall,precision,f1,tp,fp,fn,tn"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "lr");
    let counts: u64 = row[6..].iter().map(|c| c.parse::<u64>().unwrap()).sum();
    assert_eq!(counts, row[1].parse::<u64>().unwrap());

    for pw in ["123456", "Abcdef12!", "zxcvbnm,./"] {
        let out = ok(d, &["score", "--model", "lr.json", pw]);
        let got: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(got, serde_json::to_value(score(pw, &model).unwrap()).unwrap());
    }
}

#[test]
fn training_is_deterministic_across_runs_and_thread_counts() {
    let dir = prepared();
    let d = dir.path();
    ok(d, &["--threads", "1", "train", "--model", "rf", "--train", "splits/train.csv", "--out", "a.json"]);
    ok(d, &["--threads", "4", "train", "--model", "rf", "--train", "splits/train.csv", "--out", "b.json"]);
    assert_eq!(fs::read(d.join("a.json")).unwrap(), fs::read(d.join("b.json")).unwrap());

    ok(d, &["split", "features.csv", "--out-dir", "again"]);
    for name in ["train.csv", "val.csv", "test.csv"] {
        assert_eq!(fs::read(d.join("splits").join(name)).unwrap(), fs::read(d.join("again").join(name)).unwrap());
    }
    ok(d, &["split", "features.csv", "--out-dir", "other", "--seed", "7"]);
    assert_ne!(fs::read(d.join("splits/train.csv")).unwrap(), fs::read(d.join("other/train.csv")).unwrap());
}

#[test]
fn timestamp_comes_from_flag_or_source_date_epoch() {
    let dir = prepared();
    let d = dir.path();
    let out = Command::new(env!("CARGO_BIN_EXE_passgauge"))
        .args(["train", "--model", "dt", "--train", "splits/train.csv", "--out", "m.json"])
        .current_dir(d)
        .env("SOURCE_DATE_EPOCH", "86400")
        .output()
        .unwrap();
    assert!(out.status.success());
    let m = ModelFile::from_json(&fs::read(d.join("m.json")).unwrap()).unwrap();
    assert_eq!(m.training_metadata.timestamp.as_deref(), Some("1970-01-02T00:00:00Z"));

    ok(d, &["train", "--model", "dt", "--train", "splits/train.csv", "--out", "m.json", "--timestamp", "t0"]);
    let m = ModelFile::from_json(&fs::read(d.join("m.json")).unwrap()).unwrap();
    assert_eq!(m.training_metadata.timestamp.as_deref(), Some("t0"));
}

#[test]
fn grid_writes_one_row_per_cell() {
    let dir = prepared();
    let d = dir.path();
    fs::write(d.join("grid.json"), r#"{"params": {"max_depth": [2, null], "criterion": ["gini", "entropy"]}}"#)
        .unwrap();
    ok(
        d,
        &[
            "grid", "--model", "dt", "--train", "splits/train.csv", "--val", "splits/val.csv", "--grid", "grid.json",
            "--out", "scores.csv", "--best-model", "best.json",
        ],
    );
    let table = read_score_table(&fs::read(d.join("scores.csv")).unwrap()[..]).unwrap();
    let grid = GridSpec::from_json(&fs::read_to_string(d.join("grid.json")).unwrap()).unwrap();
    assert_eq!(table.len(), grid.n_cells());
    let best = ModelFile::from_json(&fs::read(d.join("best.json")).unwrap()).unwrap();
    assert_eq!(best.model_kind, ModelKind::Tree);
}

#[test]
fn clean_reports_and_writes_sorted_tsv() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(
        d.join("dump.txt"),
        "1;a@x;123456\n2;b@x;pass word\n3;c@x\n4;d@x;abc\n5;e@x;123456\n6;f@x;qwerty\n",
    )
    .unwrap();
    let out = ok(d, &["clean", "dump.txt", "--schema", "serial,email,password", "--out", "c.tsv", "--report", "r.json"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report, serde_json::from_slice::<Value>(&fs::read(d.join("r.json")).unwrap()).unwrap());
    assert_eq!(report["total_read"], 6);
    assert_eq!(report["dropped_parse"], 1);
    assert_eq!(report["dropped_illegal"], 1);
    assert_eq!(report["dropped_length"], 1);
    assert_eq!(report["duplicates_merged"], 1);
    assert_eq!(report["unique_kept"], 2);
    assert_eq!(fs::read_to_string(d.join("c.tsv")).unwrap(), "2\t123456\n1\tqwerty\n");
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    assert_eq!(passgauge(d, &["bogus"]).status.code(), Some(2));
    assert_eq!(passgauge(d, &[]).status.code(), Some(2));
    assert_eq!(passgauge(d, &["train", "--model", "knn", "--train", "x", "--out", "y"]).status.code(), Some(2));
    assert_eq!(passgauge(d, &["featurize", "missing.tsv", "--out", "f.csv"]).status.code(), Some(1));
    assert!(!d.join("f.csv").exists());

    ok(d, &["synth", "game1", "--size", "2000", "--out", "c.tsv"]);
    ok(d, &["featurize", "c.tsv", "--out", "f.csv"]);
    ok(d, &["train", "--model", "dt", "--train", "f.csv", "--out", "m.json"]);
    let bad = passgauge(d, &["score", "--model", "m.json", "abc"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("length"));
    let bad_param = passgauge(d, &["train", "--model", "dt", "--train", "f.csv", "--out", "n.json", "--param", "depth=3"]);
    assert_eq!(bad_param.status.code(), Some(1));
    assert!(!d.join("n.json").exists());
}

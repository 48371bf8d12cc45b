use std::path::Path;
use std::process::{Command, Output};

use tda_lab_cli::scores::ScoreFile;

fn tda(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tda-lab")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = tda(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn small_instances(dir: &Path) {
    ok(
        dir,
        &["gen-data", "--out", "g", "--instances", "2", "--m_subsets", "20", "--n_valid", "30", "--n_train", "90", "--n_per_subset", "30"],
    );
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn usage_and_config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tda(tmp.path(), &["gen-data", "--out", "x", "--bogus", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key bogus"));
    assert_eq!(tda(tmp.path(), &["gen-data", "--out", "x", "--train.nope", "1"]).status.code(), Some(1));
    assert_eq!(tda(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(tda(tmp.path(), &["eval"]).status.code(), Some(1));
    assert_eq!(tda(tmp.path(), &["eval", "--out", "e", "--scores", "missing"]).status.code(), Some(1));
    let help = tda(tmp.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("train-airrep"));
}

#[test]
fn numerical_failures_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tda(tmp.path(), &["gen-data", "--out", "x", "--instances", "1", "--train.learning_rate", "1e300"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn airrep_needs_an_encoder_and_oracle_needs_an_instance() {
    let tmp = tempfile::tempdir().unwrap();
    small_instances(tmp.path());
    let out = tda(tmp.path(), &["attribute", "--out", "a", "--method", "airrep", "--instance", "g/instance-0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("airrep_path"));
    let pairs = ["--train", "g/instance-0/train.jsonl", "--test", "g/instance-0/valid.jsonl"];
    let out = tda(tmp.path(), &[&["attribute", "--out", "b", "--method", "oracle"][..], &pairs].concat());
    assert_eq!(out.status.code(), Some(1));
    let out = tda(tmp.path(), &["attribute", "--out", "c", "--method", "loo", "--instance", "g/instance-0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn first_order_group_influence_is_scaled_grad_embed() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_instances(dir);
    ok(dir, &["attribute", "--out", "ge", "--method", "grad-embed", "--instance", "g/instance-0"]);
    ok(dir, &["attribute", "--out", "gi", "--method", "group-influence-1", "--instance", "g/instance-0"]);
    let ge = ScoreFile::load(&dir.join("ge")).unwrap();
    let gi = ScoreFile::load(&dir.join("gi")).unwrap();
    assert!(!ge.meta.lower_is_better && gi.meta.lower_is_better);
    let c1 = -1.0 / (90.0 - 30.0);
    for (a, b) in ge.matrix.as_slice().iter().zip(gi.matrix.as_slice()) {
        assert_eq!((c1 * a).to_bits(), b.to_bits());
    }
}

#[test]
fn oracle_scores_evaluate_to_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_instances(dir);
    ok(dir, &["attribute", "--out", "o", "--method", "oracle", "--instance", "g/instance-1"]);
    let stdout = ok(dir, &["eval", "--out", "e", "--scores", "o", "--instance", "g/instance-1"]);
    assert!(stdout.contains("LDS x100 = 100.00"), "{stdout}");
    let report = json(&dir.join("e/report.json"));
    assert_eq!(report["mean"], 1.0);
    assert_eq!(report["num_subsets"], 20);
    // Instances share a shape, so scoring against the other one still runs.
    ok(dir, &["eval", "--out", "e2", "--scores", "o", "--instance", "g/instance-0"]);
}

#[test]
fn select_on_loo_scores_prefers_the_target_task() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let source = r#"{"planted":{"num_tasks":2,"per_task":30,"d":4,"noise":0.5,"separation":4.0}}"#;
    ok(
        dir,
        &["gen-data", "--out", "g", "--instances", "1", "--source", source, "--n_valid", "20", "--n_train", "40", "--m_subsets", "10", "--n_per_subset", "20"],
    );
    // Keep only task-0 test examples.
    let valid = std::fs::read_to_string(dir.join("g/instance-0/valid.jsonl")).unwrap();
    let mut lines = valid.lines();
    let mut kept = vec![lines.next().unwrap().to_string()];
    for line in lines.filter(|l| l.contains(r#""tag":"task-0""#)) {
        let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
        v["id"] = (kept.len() - 1).into();
        kept.push(v.to_string());
    }
    assert!(kept.len() > 3);
    std::fs::write(dir.join("test.jsonl"), kept.join("\n") + "\n").unwrap();

    ok(
        dir,
        &["attribute", "--out", "loo", "--method", "loo", "--train", "g/instance-0/train.jsonl", "--test", "test.jsonl", "--fit.epochs", "20000", "--fit.tol", "1e-9"],
    );
    ok(dir, &["select", "--out", "s", "--scores", "loo", "--k", "10"]);
    let selection = json(&dir.join("s/selection.json"));
    let ids: Vec<usize> = selection["selected_ids"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as usize).collect();
    assert_eq!(ids.len(), 10);
    let train = std::fs::read_to_string(dir.join("g/instance-0/train.jsonl")).unwrap();
    let train_tags: Vec<bool> = train.lines().skip(1).map(|l| l.contains(r#""tag":"task-0""#)).collect();
    let within = ids.iter().filter(|&&i| train_tags[i]).count();
    assert!(within >= 8, "only {within} of 10 selected examples share the target task");
    let csv = std::fs::read_to_string(dir.join("s/selection.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
    assert_eq!(csv.lines().next(), Some("rank,train_id,best_rank"));

    ok(dir, &["classify", "--out", "c", "--scores", "loo", "--train", "g/instance-0/train.jsonl", "--test", "test.jsonl"]);
    assert_eq!(json(&dir.join("c/accuracy.json"))["accuracy"], 1.0);
}

#[test]
fn training_log_and_score_csv_shapes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_instances(dir);
    ok(dir, &["train-airrep", "--out", "t", "--instances", r#"["g/instance-0", "g/instance-1"]"#, "--train.steps", "25"]);
    let log = std::fs::read_to_string(dir.join("t/training_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 26);
    assert_eq!(log.lines().next(), Some("step,loss"));

    ok(dir, &["attribute", "--out", "a", "--method", "airrep", "--instance", "g/instance-0", "--airrep_path", "t/airrep.bin"]);
    let csv = std::fs::read_to_string(dir.join("a/scores.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 20 * 30);
    assert_eq!(csv.lines().next(), Some("subset_id,target_id,score"));

    ok(dir, &["attribute", "--out", "p", "--method", "tracin", "--train", "g/instance-0/train.jsonl", "--test", "g/instance-0/valid.jsonl"]);
    let p = ScoreFile::load(&dir.join("p/scores.bin")).unwrap();
    assert_eq!(p.matrix.shape(), (30, 90));
    assert_eq!(std::fs::read_to_string(dir.join("p/scores.csv")).unwrap().lines().count(), 1 + 30 * 90);
}

#[test]
fn config_paths_resolve_against_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_instances(dir);
    std::fs::create_dir(dir.join("cfg")).unwrap();
    std::fs::write(dir.join("cfg/attr.json"), r#"{"method": "rds", "instance": "../g/instance-0"}"#).unwrap();
    ok(dir, &["attribute", "--config", "cfg/attr.json", "--out", "r", "--damping", "0.01"]);
    let cfg = json(&dir.join("r/config.json"));
    let instance = Path::new(cfg["instance"].as_str().unwrap());
    assert!(instance.is_absolute());
    assert!(instance.join("labels.bin").exists());
    assert_eq!(cfg["method"], "rds");
    assert_eq!(cfg["damping"], 0.01);
    let inputs = json(&dir.join("r/inputs.json"));
    let hashes = inputs["inputs"].as_object().unwrap();
    assert!(hashes.keys().any(|k| k.ends_with("labels.bin")));
    assert!(hashes.values().all(|h| h.as_str().unwrap().len() == 64));
}

//! End-to-end checks of the `ocd` binary: output formats, exit codes and
//! file round trips.

use std::path::Path;
use std::process::{Command, Output};

fn ocd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ocd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn qvalues_table_matches_published_rows() {
    let out = ocd(&["qvalues", "--hyp", "SATURDAY", "--ref", "SUNDAY"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 10); // header + 9 prefix rows
    assert!(lines[1].contains('ε') && lines[1].contains("{S}"));
    assert!(lines[3].contains("SA") && lines[3].contains("{N, U}"));
    assert!(lines[9].contains("SATURDAY") && lines[9].contains("</s>"));
    assert!(lines[9].contains("-3"));
}

#[test]
fn qvalues_json_shape() {
    let out = ocd(&[
        "qvalues", "--hyp", "SATRAPY", "--ref", "SUNDAY", "--format", "json",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 8);
    let ms: Vec<u64> = rows.iter().map(|r| r["m"].as_u64().unwrap()).collect();
    assert_eq!(ms, [0, 0, 1, 2, 3, 3, 4, 4]);
    let last = rows.last().unwrap();
    assert_eq!(last["prefix"], "SATRAPY");
    assert_eq!(last["optimal"].as_array().unwrap().len(), 1);
    assert_eq!(last["optimal"][0], "</s>");
    let row6: Vec<&str> = rows[6]["optimal"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap())
        .collect();
    assert_eq!(row6, ["Y", "</s>"]);
}

#[test]
fn qvalues_empty_hypothesis() {
    let out = ocd(&["qvalues", "--hyp", "", "--ref", "A", "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["m"], 0);
    assert_eq!(rows[0]["optimal"][0], "A");
}

#[test]
fn qvalues_unknown_character_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let vocab_path = dir.path().join("vocab.json");
    std::fs::write(&vocab_path, r#"{"tokens":["a","b"]}"#).unwrap();
    let out = ocd(&[
        "qvalues",
        "--hyp",
        "abz",
        "--ref",
        "ab",
        "--vocab",
        vocab_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains('z'.to_string().as_str()));
}

#[test]
fn gen_is_deterministic_and_word_reverse_emits_spaces() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for path in [&a, &b] {
        let out = ocd(&[
            "gen",
            "--task",
            "reverse",
            "--n",
            "10",
            "--seed",
            "7",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(
        std::fs::read_to_string(&a).unwrap(),
        std::fs::read_to_string(&b).unwrap()
    );

    let w = dir.path().join("w.jsonl");
    let out = ocd(&[
        "gen",
        "--task",
        "word_reverse",
        "--n",
        "5",
        "--min-len",
        "2",
        "--max-len",
        "4",
        "--seed",
        "1",
        "--out",
        w.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&w).unwrap();
    assert!(text.contains(' '), "word task should emit spaces");
}

#[test]
fn gen_invalid_task_is_usage_error() {
    let out = ocd(&[
        "gen", "--task", "nonsense", "--n", "1", "--out", "/tmp/never-written.jsonl",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_check_passes_and_zero_trials_is_vacuous() {
    let out = ocd(&[
        "oracle-check",
        "--trials",
        "25",
        "--vocab",
        "3",
        "--max-len",
        "5",
        "--seed",
        "2",
    ]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("zero mismatches"));

    let out = ocd(&["oracle-check", "--trials", "0", "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["comparisons"], 0);
}

/// Generate → train (a handful of steps) → eval, exercising the whole file
/// surface; then corrupt the checkpoint version and expect rejection.
#[test]
fn train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let train_path = root.join("train.jsonl");
    let val_path = root.join("val.jsonl");
    let vocab_path = root.join("vocab.json");

    let out = ocd(&[
        "gen", "--task", "copy", "--n", "20", "--min-len", "2", "--max-len", "4",
        "--vocab-size", "4", "--seed", "1",
        "--out", train_path.to_str().unwrap(),
        "--vocab-out", vocab_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let out = ocd(&[
        "gen", "--task", "copy", "--n", "6", "--min-len", "2", "--max-len", "4",
        "--vocab-size", "4", "--seed", "2",
        "--out", val_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let out_dir = root.join("run");
    let out = ocd(&[
        "train",
        "--train-data", train_path.to_str().unwrap(),
        "--val-data", val_path.to_str().unwrap(),
        "--vocab", vocab_path.to_str().unwrap(),
        "--out-dir", out_dir.to_str().unwrap(),
        "--method", "ocd",
        "--steps", "6",
        "--batch-size", "2",
        "--eval-every", "3",
        "--beam", "1",
        "--embed-dim", "4",
        "--hidden-dim", "6",
        "--seed", "3",
    ]);
    assert!(
        out.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("# config "));
    assert!(metrics.contains("step,split,loss,cer,wer,prefix_mismatch,p_sample,beam"));
    // Two evaluation points, train + val rows each.
    assert_eq!(metrics.lines().filter(|l| l.contains(",val,")).count(), 2);
    assert!(Path::new(&out_dir.join("best.ckpt.json")).exists());

    let eval_csv = root.join("eval.csv");
    let out = ocd(&[
        "eval",
        "--ckpt", out_dir.join("best.ckpt.json").to_str().unwrap(),
        "--data", val_path.to_str().unwrap(),
        "--vocab", vocab_path.to_str().unwrap(),
        "--beam-list", "1,2,4",
        "--out", eval_csv.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "eval failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let eval_text = std::fs::read_to_string(&eval_csv).unwrap();
    let rows: Vec<&str> = eval_text
        .lines()
        .filter(|l| !l.starts_with('#') && l.contains(",eval,"))
        .collect();
    assert_eq!(rows.len(), 3, "one row per beam width:\n{eval_text}");
    assert!(rows[0].ends_with(",1") && rows[2].ends_with(",4"));

    // Version bump must be rejected as a config error.
    let ckpt_path = out_dir.join("best.ckpt.json");
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&ckpt_path).unwrap()).unwrap();
    v["version"] = serde_json::json!(99);
    std::fs::write(&ckpt_path, v.to_string()).unwrap();
    let out = ocd(&[
        "eval",
        "--ckpt", ckpt_path.to_str().unwrap(),
        "--data", val_path.to_str().unwrap(),
        "--vocab", vocab_path.to_str().unwrap(),
        "--beam-list", "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

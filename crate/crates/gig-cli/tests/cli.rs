//! End-to-end checks of the `gig` binary: every subcommand runs over the
//! bundled toy dataset, and failures map to the documented exit codes.

use std::path::{Path, PathBuf};

use assert_cmd::Command;
use predicates::prelude::*;

fn data(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(file)
}

fn gig() -> Command {
    Command::cargo_bin("gig").unwrap()
}

#[test]
fn ingest_builds_a_graph_with_edges() {
    let dir = tempfile::tempdir().unwrap();
    let publishers = dir.path().join("publishers.csv");
    std::fs::write(&publishers, "id,Name\n1,GL\n3,EA\n").unwrap();
    let games = dir.path().join("games.csv");
    std::fs::write(
        &games,
        "id,Name,publisher_id\n4,AF9,1\n5,AF11,1\n7,F20,3\n",
    )
    .unwrap();
    let base = dir.path().join("base.json");
    let out = dir.path().join("graph.json");
    gig()
        .args(["ingest", "--csv"])
        .arg(&publishers)
        .args(["--table", "publisher", "--id", "id", "--out"])
        .arg(&base)
        .assert()
        .success();
    gig()
        .args(["ingest", "--csv"])
        .arg(&games)
        .args(["--table", "game", "--id", "id", "--ref", "publisher_id=publisher"])
        .arg("--into")
        .arg(&base)
        .arg("--out")
        .arg(&out)
        .assert()
        .success();
    let text = std::fs::read_to_string(&out).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["nodes"].as_array().unwrap().len(), 5);
    assert_eq!(doc["edges"].as_array().unwrap().len(), 3);
}

#[test]
fn match_mine_train_impute_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("table.csv");
    gig()
        .args(["match", "--graph"])
        .arg(data("games.json"))
        .arg("--pattern")
        .arg(data("pattern.json"))
        .arg("--out")
        .arg(&table)
        .assert()
        .success();
    let csv = std::fs::read_to_string(&table).unwrap();
    assert!(csv.starts_with("x.id,x.Name,y.id,y.Name"), "{csv}");

    let rules = dir.path().join("rules.gdd");
    gig()
        .args(["mine", "--table"])
        .arg(&table)
        .args(["--min-support", "2", "--min-confidence", "1.0", "--max-lhs", "1", "--out"])
        .arg(&rules)
        .assert()
        .success();
    let rendered = std::fs::read_to_string(&rules).unwrap();
    assert!(rendered.contains("LHS:") && rendered.contains("RHS:"), "{rendered}");

    let model = dir.path().join("model.ckpt");
    gig()
        .args(["train", "--table"])
        .arg(&table)
        .arg("--rules")
        .arg(&rules)
        .arg("--graph")
        .arg(data("games.json"))
        .args(["--seed", "7", "--epochs", "3", "--embed-dim", "16", "--out"])
        .arg(&model)
        .assert()
        .success();
    assert!(model.exists());

    // Impute over the perturbed variant of the same dataset.
    let missing_table = dir.path().join("missing_table.csv");
    gig()
        .args(["match", "--graph"])
        .arg(data("games_missing.json"))
        .arg("--pattern")
        .arg(data("pattern.json"))
        .arg("--out")
        .arg(&missing_table)
        .assert()
        .success();
    let imputed = dir.path().join("imputed.json");
    let log = dir.path().join("decisions.jsonl");
    gig()
        .args(["impute", "--graph"])
        .arg(data("games_missing.json"))
        .arg("--table")
        .arg(&missing_table)
        .arg("--rules")
        .arg(&rules)
        .arg("--model")
        .arg(&model)
        .arg("--out")
        .arg(&imputed)
        .arg("--log")
        .arg(&log)
        .assert()
        .success();
    assert!(!std::fs::read_to_string(&log).unwrap().trim().is_empty());

    let report = dir.path().join("report.csv");
    gig()
        .args(["eval", "--truth"])
        .arg(data("truth.json"))
        .arg("--log")
        .arg(&log)
        .args(["--format", "csv", "--out"])
        .arg(&report)
        .assert()
        .success();
    let report = std::fs::read_to_string(&report).unwrap();
    assert!(report.starts_with("dataset,pct,missing,imputed,true,precision,recall,f1"), "{report}");
}

#[test]
fn pipeline_runs_from_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config_text = std::fs::read_to_string(data("run.json")).unwrap();
    let mut config: serde_json::Value = serde_json::from_str(&config_text).unwrap();
    config["dataset"] = data("games.json").to_str().unwrap().into();
    config["pattern"] = data("pattern.json").to_str().unwrap().into();
    config["out_dir"] = dir.path().join("out").to_str().unwrap().into();
    config["model"]["epochs"] = 25.into();
    let path = dir.path().join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    gig()
        .args(["pipeline", "--config"])
        .arg(&path)
        .assert()
        .success()
        .stdout(predicate::str::contains("games pct=0"));
    assert!(dir.path().join("out/report.csv").exists());
    assert!(dir.path().join("out/model.ckpt").exists());
    assert!(dir.path().join("out/rules.gdd").exists());
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(&path, r#"{"dataset": "g.json", "pattern": "p.json", "missing_pcts": [1.5]}"#)
        .unwrap();
    gig()
        .args(["pipeline", "--config"])
        .arg(&path)
        .assert()
        .failure()
        .code(2)
        .stderr(predicate::str::contains("config error"));
}

#[test]
fn stage_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    gig()
        .args(["match", "--graph"])
        .arg(dir.path().join("absent.json"))
        .arg("--pattern")
        .arg(data("pattern.json"))
        .arg("--out")
        .arg(dir.path().join("t.csv"))
        .assert()
        .failure()
        .code(3);
}

#[test]
fn unknown_flag_exits_2() {
    gig().args(["mine", "--bogus"]).assert().failure().code(2);
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn labelamp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_labelamp"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = labelamp(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// 2000 items with one separable feature; every tenth row is undersized and
/// one row is garbage.
fn write_manifest(dir: &Path) -> (String, String) {
    let mut manifest = String::new();
    let mut labels = String::new();
    for i in 0..2000 {
        let positive = i % 3 == 0;
        let x = if positive { 1.0 } else { -1.0 } + (i % 7) as f64 * 0.01;
        let size = if i % 10 == 9 { 100 } else { 640 };
        manifest.push_str(&format!(
            "{{\"id\":\"p{i:04}\",\"url\":\"http://img/{i}.jpg\",\"width\":{size},\"height\":480,\"features\":[{x}]}}\n"
        ));
        labels.push_str(&format!(
            "{{\"item_id\":\"p{i:04}\",\"label\":\"{}\"}}\n",
            if positive { "positive" } else { "negative" }
        ));
    }
    manifest.push_str("not json\n");
    let m = dir.join("manifest.jsonl");
    let l = dir.join("labels.jsonl");
    fs::write(&m, manifest).unwrap();
    fs::write(&l, labels).unwrap();
    (m.to_str().unwrap().to_owned(), l.to_str().unwrap().to_owned())
}

#[test]
fn ingest_cascade_export_and_stats_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, labels) = write_manifest(dir.path());
    let journal = dir.path().join("journal.jsonl");
    let journal = journal.to_str().unwrap();

    let report: Value = serde_json::from_str(&ok(&[
        "ingest", &manifest, "--category", "bridge", "--min-dim", "256", "--journal", journal,
    ]))
    .unwrap();
    assert_eq!(report["seen"], 2000);
    assert_eq!(report["malformed"], 1);
    assert_eq!(report["rejected_size"], 200);
    assert_eq!(report["accepted"], 1800);

    let config = dir.path().join("cascade.toml");
    fs::write(
        &config,
        "batch_size = 400\ntest_size = 100\nval_size = 50\nexhaustive_limit = 200\n[scorer]\nepochs = 50\n",
    )
    .unwrap();
    let config = config.to_str().unwrap();
    let out = ok(&["cascade", "run", "--category", "bridge", "--config", config, "--journal", journal, "--labels", &labels]);
    let reports: Vec<Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(reports.last().unwrap()["terminal"].as_bool().unwrap());

    let stats: Value = serde_json::from_str(&ok(&["stats", "--category", "bridge", "--journal", journal])).unwrap();
    assert_eq!(stats["finished"], true);
    let counts = &stats["state_counts"];
    let resolved: u64 = ["human_positive", "human_negative", "auto_positive", "auto_negative"]
        .iter()
        .map(|k| counts[k].as_u64().unwrap())
        .sum();
    assert_eq!(resolved, 1800);

    let export = dir.path().join("labels-out.jsonl");
    ok(&["export", "--category", "bridge", "--out", export.to_str().unwrap(), "--journal", journal]);
    let rows: Vec<Value> = fs::read_to_string(&export)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len() as u64, resolved);
    let positives = rows.iter().filter(|r| r["final_label"] == "positive").count() as u64;
    assert_eq!(positives, counts["human_positive"].as_u64().unwrap() + counts["auto_positive"].as_u64().unwrap());

    let audit: Value = serde_json::from_str(&ok(&[
        "audit", "--category", "bridge", "--sample-n", "50", "--expert-file", &labels, "--journal", journal,
    ]))
    .unwrap();
    assert_eq!(audit["sample_size"], 50);
    let stats: Value = serde_json::from_str(&ok(&["stats", "--category", "bridge", "--journal", journal])).unwrap();
    assert_eq!(stats["audits"].as_array().unwrap().len(), 1);
}

#[test]
fn cascade_step_opens_then_finishes() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, labels) = write_manifest(dir.path());
    let journal = dir.path().join("journal.jsonl");
    let journal = journal.to_str().unwrap();
    ok(&["ingest", &manifest, "--category", "bridge", "--journal", journal]);
    let config = dir.path().join("cascade.toml");
    fs::write(&config, "batch_size = 400\ntest_size = 100\nval_size = 50\nexhaustive_limit = 200\n").unwrap();
    let config = config.to_str().unwrap();
    let step = ["cascade", "step", "--category", "bridge", "--config", config, "--journal", journal];

    let opened: Value = serde_json::from_str(&ok(&step)).unwrap();
    assert_eq!(opened["opened"], 1);
    assert_eq!(opened["targets"], 400);
    // nothing labeled yet
    let out = labelamp(&step);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("400 of 400 targets"));

    let mut with_labels = step.to_vec();
    with_labels.extend(["--labels", &labels]);
    let report: Value = serde_json::from_str(&ok(&with_labels)).unwrap();
    assert_eq!(report["iteration"], 1);
    assert_eq!(report["human_positive"].as_u64().unwrap() + report["human_negative"].as_u64().unwrap(), 400);
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sim.toml");
    fs::write(
        &config,
        "pool_size = 3000\nworker_count = 8\n[cascade]\nbatch_size = 800\ntest_size = 250\nval_size = 100\nexhaustive_limit = 800\n",
    )
    .unwrap();
    let config = config.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["simulate", "--config", config, "--seed", "42", "--out", a.to_str().unwrap()]);
    ok(&["simulate", "--config", config, "--seed", "42", "--out", b.to_str().unwrap()]);
    for name in ["result.json", "reports.jsonl", "labels.jsonl", "journal.jsonl"] {
        let x = fs::read(a.join(name)).unwrap();
        assert!(!x.is_empty(), "{name} empty");
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name} differs");
    }
    let result: Value = serde_json::from_slice(&fs::read(a.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["seed"], 42);
}

#[test]
fn help_and_failures() {
    for sub in ["ingest", "serve", "cascade", "simulate", "audit", "stats", "export"] {
        let out = labelamp(&[sub, "--help"]);
        assert!(out.status.success(), "{sub} --help");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
    let out = labelamp(&["stats", "--category", "x", "--journal", "/nonexistent/journal"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = labelamp(&["serve", "--journal", "j", "--gold", "nopath"]);
    assert!(!out.status.success());
}

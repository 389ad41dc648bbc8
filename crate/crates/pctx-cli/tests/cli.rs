//! End-to-end tests of the `pctx` binary against a run directory.

use std::path::Path;
use std::process::{Command, Output};

fn pctx(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pctx"))
        .arg(args[0])
        .args(["--out", dir.to_str().unwrap()])
        .args(["--codebook-sizes", "32,32,32"])
        .args(["--conflict-alphabet", "32"])
        .args(["--train-epochs", "2"])
        .args(&args[1..])
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn registry_hash(dir: &Path) -> String {
    let manifest = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    json["stages"]["build-tokenizer"]["artifacts"]["registry.tsv"]["sha256"]
        .as_str()
        .unwrap()
        .to_string()
}

#[test]
fn full_pipeline_happy_path() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    assert_ok(&pctx(
        dir,
        &["synth", "--users", "120", "--items", "40", "--intents", "2"],
    ));
    for name in ["interactions.tsv", "features.emb", "intents.tsv"] {
        assert!(dir.join(name).exists(), "{name} missing");
    }

    assert_ok(&pctx(dir, &["build-tokenizer"]));
    assert_ok(&pctx(dir, &["tokenize"]));
    assert_ok(&pctx(dir, &["fit"]));
    assert_ok(&pctx(dir, &["eval"]));

    let metrics = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("metric,k,value"));
    assert!(metrics.contains("recall,10,"));
    assert!(metrics.contains("users,,120"));

    let predictions = std::fs::read_to_string(dir.join("predictions.tsv")).unwrap();
    let first = predictions.lines().next().unwrap();
    assert_eq!(
        first.split('\t').count(),
        5,
        "user/rank/item/score/sid columns"
    );

    assert_ok(&pctx(dir, &["analyze"]));
    let rate = std::fs::read_to_string(dir.join("popular_rate.csv")).unwrap();
    assert!(rate.contains("context_matched"));
    assert!(rate.contains("uniform_replacement"));
    assert!(dir.join("sid_groups.txt").exists());
    assert!(dir.join("sid_stats.csv").exists());
}

#[test]
fn eval_before_fit_exits_2_naming_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_ok(&pctx(
        dir,
        &["synth", "--users", "80", "--items", "30", "--intents", "2"],
    ));
    assert_ok(&pctx(dir, &["build-tokenizer"]));
    assert_ok(&pctx(dir, &["tokenize"]));

    let out = pctx(dir, &["eval"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("fit"), "stderr: {stderr}");
}

#[test]
fn invalid_config_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pctx(tmp.path(), &["synth", "--gamma", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn rebuild_reproduces_identical_registry_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_ok(&pctx(
        dir,
        &["synth", "--users", "80", "--items", "30", "--intents", "2"],
    ));
    assert_ok(&pctx(dir, &["build-tokenizer"]));
    let first = registry_hash(dir);
    let state_first = std::fs::read(dir.join("registry_state.tsv")).unwrap();

    assert_ok(&pctx(dir, &["build-tokenizer"]));
    assert_eq!(registry_hash(dir), first);
    assert_eq!(
        std::fs::read(dir.join("registry_state.tsv")).unwrap(),
        state_first
    );
}

#[test]
fn sweep_writes_a_table() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_ok(&pctx(
        dir,
        &["synth", "--users", "80", "--items", "30", "--intents", "2"],
    ));
    assert_ok(&pctx(
        dir,
        &[
            "sweep", "--param", "tau", "--values", "0.0,0.2", "--beam", "10",
        ],
    ));
    let table = std::fs::read_to_string(dir.join("sweep_tau.csv")).unwrap();
    assert!(table.starts_with("tau,"));
    assert_eq!(table.lines().count(), 3); // header + 2 rows
}

#[test]
fn external_context_injection_between_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_ok(&pctx(
        dir,
        &["synth", "--users", "60", "--items", "25", "--intents", "2"],
    ));

    // derive a contexts.emb covering all training occurrences: constant rows
    // keyed user:position
    let interactions = std::fs::read_to_string(dir.join("interactions.tsv")).unwrap();
    let mut per_user: std::collections::BTreeMap<&str, usize> = Default::default();
    let mut order = Vec::new();
    for line in interactions.lines() {
        let user = line.split('\t').next().unwrap();
        if !per_user.contains_key(user) {
            order.push(user);
        }
        *per_user.entry(user).or_default() += 1;
    }
    let mut rows = Vec::new();
    for user in order {
        let len = per_user[user];
        for pos in 1..=len.saturating_sub(2) {
            rows.push(format!("{user}:{pos}\t{} 0.25", pos as f32 * 0.5));
        }
    }
    let body = format!("{} 2\n{}\n", rows.len(), rows.join("\n"));
    std::fs::write(dir.join("contexts.emb"), body).unwrap();

    assert_ok(&pctx(dir, &["build-tokenizer"]));
    assert_ok(&pctx(dir, &["tokenize"]));
    assert!(dir.join("corpus.tokens").exists());
}

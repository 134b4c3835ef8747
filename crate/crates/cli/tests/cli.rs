use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kgrr_core::kg::{Dataset, Triple, Vocabulary};
use kgrr_core::reader::load_checkpoint;
use kgrr_core::retriever::{read_contexts, write_contexts};
use kgrr_core::train::{read_loss_csv, AblationRow, RankingReport};

fn kgrr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgrr"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = kgrr(dir, args);
    assert!(
        out.status.success(),
        "kgrr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Stderr of a run that must fail with a one-line diagnostic.
fn fails(dir: &Path, args: &[&str]) -> String {
    let out = kgrr(dir, args);
    assert!(!out.status.success(), "kgrr {args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "not one line: {err:?}");
    assert!(err.starts_with("kgrr: "), "{err}");
    err
}

const TINY: &[&str] = &["--layers", "1", "--heads", "2", "--hidden", "16", "--ffn-dim", "32"];

fn cat<'a>(parts: &[&[&'a str]]) -> Vec<&'a str> {
    parts.concat()
}

fn synth_dir(dir: &Path) -> PathBuf {
    ok(dir, &["synth", "--entities", "60", "--seed", "7", "-o", "data"]);
    dir.join("data")
}

fn run_dir(runs: &Path) -> PathBuf {
    let mut dirs: Vec<_> = std::fs::read_dir(runs).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1);
    dirs.pop().unwrap()
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["synth", "--entities", "60", "--seed", "7", "-o", "a"]);
    ok(tmp.path(), &["synth", "--entities", "60", "--seed", "7", "-o", "b"]);
    ok(tmp.path(), &["synth", "--entities", "60", "--seed", "8", "-o", "c"]);
    for f in ["train.txt", "valid.txt", "test.txt"] {
        let a = std::fs::read(tmp.path().join("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read(tmp.path().join("b").join(f)).unwrap(), "{f}");
        assert!(!a.is_empty());
    }
    assert_ne!(
        std::fs::read(tmp.path().join("a/train.txt")).unwrap(),
        std::fs::read(tmp.path().join("c/train.txt")).unwrap()
    );
}

#[test]
fn desk_bfs_query_gives_the_three_edge_context() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["synth", "--desk", "-o", "desk"]);
    ok(
        tmp.path(),
        &["retrieve", "--data", "desk", "--strategy", "bfs", "--budget", "3", "--query", "a", "r1", "--out", "c.jsonl"],
    );
    let ctx = read_contexts(&tmp.path().join("c.jsonl")).unwrap();
    assert_eq!(ctx.len(), 1);
    // a..f are 0..5, r1 and r3 are 0 and 2
    assert_eq!(ctx[0].edges, vec![Triple::new(0, 0, 1), Triple::new(0, 0, 3), Triple::new(0, 2, 5)]);
    assert_eq!(ctx[0].query.source.0, 0);
    assert_eq!(ctx[0].query.relation.0, 0);
}

#[test]
fn split_contexts_round_trip_and_respect_the_budget() {
    let tmp = tempfile::tempdir().unwrap();
    synth_dir(tmp.path());
    for strategy in ["bfs", "onehop", "beam"] {
        let out = format!("{strategy}.jsonl");
        ok(
            tmp.path(),
            &["retrieve", "--data", "data", "--strategy", strategy, "--budget", "6", "--beam-width", "4", "--out", &out],
        );
        let path = tmp.path().join(&out);
        let ctx = read_contexts(&path).unwrap();
        assert!(!ctx.is_empty());
        assert!(ctx.iter().all(|c| c.edges.len() <= 6 && c.query.target.is_some()));
        let again = tmp.path().join("again.jsonl");
        write_contexts(&again, &ctx).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }
}

#[test]
fn prepare_writes_a_vocabulary_that_reloads() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth_dir(tmp.path());
    let stdout = ok(tmp.path(), &["prepare", "--data", "data", "--cache", "cache", "--budget", "5"]);
    assert!(stdout.contains("60 entities"), "{stdout}");
    let vocab = Vocabulary::load(&tmp.path().join("cache")).unwrap();
    assert_eq!(vocab.entity_names(), Dataset::load(&data).unwrap().vocab.entity_names());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("cache/graph.json")).unwrap()).unwrap();
    assert_eq!(summary["entities"], 60);
    let cached = std::fs::read_dir(tmp.path().join("cache"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("contexts-"))
        .count();
    assert_eq!(cached, 3);
}

#[test]
fn train_twice_gives_identical_loss_csv_and_eval_reads_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    synth_dir(tmp.path());
    let base = ["train", "--data", "data", "--budget", "8", "--epochs", "2", "--batch-size", "32", "--seed", "3"];
    ok(tmp.path(), &cat(&[&base, TINY, &["--runs-dir", "r1"]]));
    ok(tmp.path(), &cat(&[&base, TINY, &["--runs-dir", "r2"]]));
    let (a, b) = (run_dir(&tmp.path().join("r1")), run_dir(&tmp.path().join("r2")));
    assert_eq!(a.file_name(), b.file_name(), "same config, same run id");

    let csv_a = std::fs::read(a.join("loss.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("loss.csv")).unwrap());
    assert!(csv_a.starts_with(b"step,lr,loss\n"));
    let records = read_loss_csv(&a.join("loss.csv")).unwrap();
    assert_eq!(records.first().unwrap().step, 1);

    for f in ["epoch-001.ckpt", "epoch-002.ckpt", "model.ckpt", "config.toml", "run.json"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let (params, manifest) = load_checkpoint::<f32>(&a.join("epoch-001.ckpt")).unwrap();
    assert_eq!(manifest.meta["epoch"], 1);
    assert_eq!(params.config().hidden, 16);
    assert_eq!(std::fs::read(a.join("model.ckpt")).unwrap(), std::fs::read(a.join("epoch-002.ckpt")).unwrap());

    let a_str = a.to_str().unwrap();
    ok(tmp.path(), &["eval", "--run-dir", a_str]);
    let report: RankingReport =
        serde_json::from_str(&std::fs::read_to_string(a.join("metrics-test.json")).unwrap()).unwrap();
    assert!(report.per_query.is_none());
    assert_eq!((report.split.as_str(), report.strategy.as_str()), ("test", "bfs"));
    assert!(report.mrr > 0.0 && report.mrr <= 1.0);

    // Per-query ranks, and scoring a precomputed context file, agree.
    ok(tmp.path(), &["eval", "--run-dir", a_str, "--per-query", "--metrics", "full.json"]);
    let full: RankingReport = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("full.json")).unwrap()).unwrap();
    assert_eq!(full.per_query.as_ref().unwrap().len(), full.count());
    assert_eq!(full.clone().without_per_query(), report);
    ok(tmp.path(), &["retrieve", "--data", "data", "--budget", "8", "--out", "test.jsonl"]);
    ok(
        tmp.path(),
        &["eval", "--run-dir", a_str, "--contexts", "test.jsonl", "--metrics", "from-file.json"],
    );
    let from_file: RankingReport =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("from-file.json")).unwrap()).unwrap();
    assert_eq!(from_file, report);

    // The snapshot is a valid config: feeding it back reproduces the run id.
    let snap = a.join("config.toml");
    ok(tmp.path(), &["train", "-c", snap.to_str().unwrap(), "--runs-dir", "r3"]);
    assert_eq!(run_dir(&tmp.path().join("r3")).file_name(), a.file_name());
}

#[test]
fn flags_override_the_file_which_overrides_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    synth_dir(tmp.path());
    std::fs::write(
        tmp.path().join("run.toml"),
        "data = \"data\"\n[retriever]\nstrategy = \"onehop\"\nbudget = 30\n[train]\nbatch_size = 64\nepochs = 1\n\
         [model]\nlayers = 1\nheads = 2\nhidden = 16\nffn_dim = 32\n",
    )
    .unwrap();
    ok(tmp.path(), &["train", "-c", "run.toml", "--budget", "4", "--runs-dir", "runs"]);
    let snap: toml::Value = toml::from_str(&std::fs::read_to_string(run_dir(&tmp.path().join("runs")).join("config.toml")).unwrap()).unwrap();
    // flag over file
    assert_eq!(snap["retriever"]["budget"].as_integer(), Some(4));
    // file over default
    assert_eq!(snap["retriever"]["strategy"].as_str(), Some("onehop"));
    assert_eq!(snap["train"]["batch_size"].as_integer(), Some(64));
    // default where neither speaks
    assert_eq!(snap["train"]["optimizer"]["peak_lr"].as_float(), Some(2e-3));
}

#[test]
fn ablate_covers_every_reader_and_retriever() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["synth", "--desk", "-o", "desk"]);
    let args = ["ablate", "--data", "desk", "--split", "train", "--strategies", "bfs,onehop", "--budget", "4", "--epochs", "1"];
    let stdout = ok(tmp.path(), &cat(&[&args, TINY, &["--runs-dir", "runs"]]));
    assert!(stdout.contains("no-graph-mask"), "{stdout}");
    let dir = run_dir(&tmp.path().join("runs"));
    assert!(dir.file_name().unwrap().to_string_lossy().starts_with("ablate-"));
    let rows: Vec<AblationRow> = serde_json::from_str(&std::fs::read_to_string(dir.join("ablation.json")).unwrap()).unwrap();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r.report.count() == 16));
}

#[test]
fn failures_exit_nonzero_with_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["synth", "--desk", "-o", "desk"]);
    let err = fails(tmp.path(), &["train", "--bogus"]);
    assert!(err.contains("--bogus"), "{err}");
    let err = fails(tmp.path(), &["frobnicate"]);
    assert!(err.contains("frobnicate"), "{err}");
    let err = fails(tmp.path(), &["train", "--data", "missing"]);
    assert!(err.contains("missing"), "{err}");
    let err = fails(tmp.path(), &["eval", "--checkpoint", "nope.ckpt", "--data", "desk", "--metrics", "m.json"]);
    assert!(err.contains("nope.ckpt"), "{err}");

    std::fs::write(tmp.path().join("typo.toml"), "[retriever]\nbudgett = 3\n").unwrap();
    let err = fails(tmp.path(), &["train", "-c", "typo.toml"]);
    assert!(err.contains("budgett") && err.contains("line 2"), "{err}");
    std::fs::write(tmp.path().join("broken.toml"), "[model\n").unwrap();
    fails(tmp.path(), &["train", "-c", "broken.toml"]);
    fails(tmp.path(), &["retrieve", "--data", "desk", "--query", "a", "nope", "--out", "x.jsonl"]);
    fails(tmp.path(), &["retrieve", "--data", "desk", "--strategy", "paths", "--out", "x.jsonl"]);
    fails(tmp.path(), &["retrieve", "--data", "desk", "--strategy", "sideways", "--out", "x.jsonl"]);
}

#[test]
fn help_lists_every_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let help = ok(tmp.path(), &["--help"]);
    for sub in ["prepare", "retrieve", "train", "eval", "ablate", "synth"] {
        assert!(help.contains(sub), "{sub}");
    }
    let train_help = ok(tmp.path(), &["train", "--help"]);
    for flag in ["--budget", "--strategy", "--seed", "--lr", "--config"] {
        assert!(train_help.contains(flag), "{flag}");
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = "hidden_size = 8\nnum_layers = 1\nnum_heads = 2\nffn_size = 16\nvocab_size = 2048\n\
                    batch_size = 32\nlearning_rate = 3e-3\nepochs = 1\npatience = 1\nfolds = 3\n";

fn sacl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sacl"))
        .args(args)
        .current_dir(dir)
        .env("SACL_RUNS_DIR", dir.join("runs"))
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(&sacl(dir.path(), &["synth", "--out", "data", "--train-per-language", "60", "--test-per-language", "12"]));
    fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();
    dir
}

fn single_run(dir: &Path) -> PathBuf {
    let runs: Vec<_> = fs::read_dir(dir.join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1, "{runs:?}");
    runs[0].clone()
}

const TRAIN: [&str; 8] = [
    "--train", "data/xa_train.tsv", "--train", "data/xb_train.tsv",
    "--lexicon", "xa=data/xa_lexicon.tsv", "--lexicon", "xb=data/xb_lexicon.tsv",
];

#[test]
fn splits_are_reproducible() {
    let dir = fixture();
    let args = ["splits", "--k", "5", "--seed", "7", "--train", "data/xa_train.tsv"];
    ok(&sacl(dir.path(), &[&args[..], &["--out", "a.json"]].concat()));
    ok(&sacl(dir.path(), &[&args[..], &["--out", "b.json"]].concat()));
    let a = fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.json")).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["folds"].as_array().unwrap().len(), 5);
}

#[test]
fn input_errors_exit_nonzero() {
    let dir = fixture();
    let out = sacl(dir.path(), &["splits", "--train", "missing.tsv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.tsv"));

    let out = sacl(dir.path(), &["splits", "--k", "21", "--train", "data/xa_train.tsv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("category `positive`"));

    let out = sacl(dir.path(), &["train", "--train", "data/xa_train.tsv", "--set", "fgm_radius=1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fgm_radius"));

    fs::write(dir.path().join("bad.cfg"), "epochs = 2\nbatchsize = 4\n").unwrap();
    let out = sacl(dir.path(), &["train", "--train", "data/xa_train.tsv", "--config", "bad.cfg"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("batchsize"));

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert!(!sacl(dir.path(), &["report", "empty"]).status.success());
}

#[test]
fn train_zeroshot_report() {
    let dir = fixture();
    let args = [&["train", "--config", "tiny.cfg", "--test", "data/xa_test.tsv"][..], &TRAIN].concat();
    ok(&sacl(dir.path(), &args));
    let run = single_run(dir.path());
    for f in ["summary.json", "manifest.json", "config.txt", "scores.json", "summary.md", "predictions_test.tsv"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    for fold in 1..=3 {
        for f in ["checkpoint", "metrics.json", "log"] {
            assert!(run.join(format!("fold{fold}")).join(f).is_file());
        }
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 5);
    assert_eq!(manifest["config"]["batch_size"], 32);

    // replaying the same command overwrites the same run with identical metrics
    let before = fs::read(run.join("fold1/metrics.json")).unwrap();
    ok(&sacl(dir.path(), &args));
    assert_eq!(single_run(dir.path()), run);
    assert_eq!(fs::read(run.join("fold1/metrics.json")).unwrap(), before);

    let run_arg = run.to_str().unwrap();
    let out = sacl(dir.path(), &["zeroshot", "--run", run_arg, "--target", "data/xc_test.tsv", "--lexicon", "xc=data/xc_lexicon.tsv"]);
    ok(&out);
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("zeroshot/xc/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["subtask"], "zero-shot");
    assert_eq!(metrics["language"], "xc");
    let preds = fs::read_to_string(run.join("zeroshot/xc/predictions.tsv")).unwrap();
    let mut lines = preds.lines();
    assert_eq!(lines.next(), Some("ID\tlabel"));
    assert_eq!(lines.clone().count(), 12);
    for line in lines {
        let (id, label) = line.split_once('\t').unwrap();
        assert!(id.starts_with("xc_test_"));
        assert!(["positive", "negative", "neutral"].contains(&label));
    }

    let out = sacl(dir.path(), &["zeroshot", "--run", run_arg, "--target", "data/xa_test.tsv", "--out", "seen"]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let seen = fs::read_to_string(dir.path().join("seen/xa/metrics.json")).unwrap();
    assert!(seen.contains("\"seen-language\""));

    let table = ok(&sacl(dir.path(), &["report", "runs"]));
    assert!(table.contains("| zero-shot | xc |"));
    assert!(table.contains("| validation | multilingual |"));
    assert_eq!(table.lines().filter(|l| l.starts_with("| ")).count(), 1 + 3);
}

#[test]
fn ablation_flags_map_to_config() {
    let dir = fixture();
    let args = [
        &["train", "--config", "tiny.cfg", "--fold1", "--lambda", "0", "--fgm-radius", "0", "--fgm-rate", "0", "--no-lexicon"][..],
        &TRAIN,
    ]
    .concat();
    ok(&sacl(dir.path(), &args));
    let config = fs::read_to_string(single_run(dir.path()).join("config.txt")).unwrap();
    for line in ["lambda = 0\n", "perturbation_radius = 0\n", "perturbation_rate = 0\n", "use_lexicon = false\n", "fold_mode = first\n"] {
        assert!(config.contains(line), "{line:?} missing from\n{config}");
    }
    let log = fs::read_to_string(single_run(dir.path()).join("fold1/log")).unwrap();
    assert!(log.lines().nth(1).unwrap().ends_with("\t0"), "adversarial steps recorded: {log}");
}

#[test]
fn ablate_writes_four_variants() {
    let dir = fixture();
    let args = [&["ablate", "--config", "tiny.cfg", "--fold1"][..], &TRAIN].concat();
    let table = ok(&sacl(dir.path(), &args));
    let run = single_run(dir.path());
    let mut hashes = Vec::new();
    for variant in ["full", "wo_lexicon", "wo_sacl", "wo_both"] {
        let sub = run.join(variant);
        assert!(sub.join("summary.json").is_file(), "{variant}");
        let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(sub.join("summary.json")).unwrap()).unwrap();
        hashes.push(summary["config_hash"].as_str().unwrap().to_string());
        assert!(table.contains(variant));
    }
    hashes.sort();
    hashes.dedup();
    assert_eq!(hashes.len(), 4);
    let scores: Vec<serde_json::Value> = serde_json::from_str(&fs::read_to_string(run.join("scores.json")).unwrap()).unwrap();
    assert_eq!(scores.len(), 4);
}

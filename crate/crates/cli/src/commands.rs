use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sacl::config::{apply_setting, load_config};
use sacl::data::{stratified_kfold, write_dataset, write_lexicon, write_predictions, Stratify};
use sacl::encoder::CompactEncoder;
use sacl::eval::{
    ablation_grid, emit_report, render_summary, score, validation_report, zero_shot_eval, MetricsReport, Subtask,
};
use sacl::run::{collect_reports, load_run, write_cv_run, RunManifest};
use sacl::synth::{toy_corpus, ToySpec};
use sacl::trainer::{prepare_for, run_cv, FoldEnsemble, FoldMode, PreparedExample, TrainConfig};
use sacl::Polarity;
use serde::Serialize;

use crate::inputs::{load_datasets, load_lexicons, paths};
use crate::{ConfigArgs, ReportArgs, SplitsArgs, SynthArgs, TrainArgs, ZeroshotArgs};

fn command_line() -> Vec<String> {
    let mut args: Vec<String> = std::env::args().skip(1).collect();
    args.insert(0, "sacl".into());
    args
}

fn resolve_config(args: &ConfigArgs) -> Result<TrainConfig> {
    let mut config = match &args.config {
        Some(path) => load_config(path, TrainConfig::default())?,
        None => TrainConfig::default(),
    };
    for assignment in &args.set {
        let (key, value) = assignment.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {assignment:?}"))?;
        apply_setting(&mut config, key, value)?;
    }
    let named: [(&str, Option<String>); 16] = [
        ("epochs", args.epochs.map(|v| v.to_string())),
        ("patience", args.patience.map(|v| v.to_string())),
        ("batch_size", args.batch_size.map(|v| v.to_string())),
        ("learning_rate", args.learning_rate.map(|v| v.to_string())),
        ("weight_decay", args.weight_decay.map(|v| v.to_string())),
        ("dropout", args.dropout.map(|v| v.to_string())),
        ("max_token_length", args.max_token_length.map(|v| v.to_string())),
        ("hidden_size", args.hidden_size.map(|v| v.to_string())),
        ("lambda", args.lambda.map(|v| v.to_string())),
        ("lambda_adv", args.lambda_adv.map(|v| v.to_string())),
        ("temperature", args.temperature.map(|v| v.to_string())),
        ("temperature_adv", args.temperature_adv.map(|v| v.to_string())),
        ("perturbation_radius", args.fgm_radius.map(|v| v.to_string())),
        ("perturbation_rate", args.fgm_rate.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("folds", args.folds.map(|v| v.to_string())),
    ];
    for (key, value) in named {
        if let Some(value) = value {
            apply_setting(&mut config, key, &value)?;
        }
    }
    if args.fold1 {
        config.fold_mode = FoldMode::First;
    }
    if args.no_lexicon {
        config.use_lexicon = false;
    }
    config.validate()?;
    Ok(config)
}

#[derive(Serialize)]
struct FoldManifest<'a> {
    k: usize,
    seed: u64,
    stratify: &'a str,
    folds: Vec<FoldIds>,
}

#[derive(Serialize)]
struct FoldIds {
    fold: usize,
    train_ids: Vec<String>,
    val_ids: Vec<String>,
}

pub fn splits(a: SplitsArgs) -> Result<()> {
    let stratify = match a.stratify.as_str() {
        "label" => Stratify::Label,
        "language_label" => Stratify::LanguageAndLabel,
        other => bail!("unknown stratification {other:?} (expected label or language_label)"),
    };
    let dataset = load_datasets(&a.data.train)?;
    let folds = stratified_kfold(&dataset, a.k, a.seed, stratify)?;
    let manifest = FoldManifest {
        k: a.k,
        seed: a.seed,
        stratify: &a.stratify,
        folds: folds
            .into_iter()
            .map(|f| FoldIds {
                fold: f.fold_index + 1,
                train_ids: f.train_ids.into_iter().collect(),
                val_ids: f.val_ids.into_iter().collect(),
            })
            .collect(),
    };
    write_file(&a.out, serde_json::to_string_pretty(&manifest)? + "\n")?;
    println!("{}", a.out.display());
    Ok(())
}

fn write_file(path: &Path, contents: String) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Id as it appeared in the input file, without the language prefix added
/// when several files are combined.
fn file_id(ex: &PreparedExample) -> String {
    ex.id.strip_prefix(&format!("{}:", ex.language)).unwrap_or(&ex.id).to_string()
}

/// Scores `examples` overall and per language.
fn score_by_language(
    preds: &[Polarity],
    examples: &[PreparedExample],
    subtask: Subtask,
    config: &TrainConfig,
) -> Result<Vec<MetricsReport>> {
    let hash = config.fingerprint();
    let languages: BTreeSet<&str> = examples.iter().map(|e| e.language.as_str()).collect();
    let mut reports = Vec::new();
    for lang in &languages {
        let (p, g): (Vec<Polarity>, Vec<Polarity>) =
            preds.iter().zip(examples).filter(|(_, e)| e.language == *lang).map(|(p, e)| (*p, e.label)).unzip();
        reports.push(MetricsReport::new(&score(&p, &g)?, subtask, *lang, &hash, config.seed));
    }
    if languages.len() > 1 {
        let golds: Vec<Polarity> = examples.iter().map(|e| e.label).collect();
        reports.push(MetricsReport::new(&score(preds, &golds)?, subtask, "multilingual", &hash, config.seed));
    }
    Ok(reports)
}

fn predict_and_write(
    ensemble: &FoldEnsemble<CompactEncoder>,
    examples: &[PreparedExample],
    path: &Path,
) -> Result<Vec<Polarity>> {
    let preds = ensemble.predict(examples)?;
    let rows: Vec<(String, Polarity)> = examples.iter().map(file_id).zip(preds.iter().copied()).collect();
    write_predictions(path, &rows)?;
    Ok(preds)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let config = resolve_config(&a.config)?;
    let dataset = load_datasets(&a.data.train)?;
    let lexicons = load_lexicons(&a.data.lexicons)?;
    if config.use_lexicon && lexicons.is_none() {
        log::warn!("no --lexicon given; inputs are not prefixed");
    }
    let test = if a.test.is_empty() { None } else { Some(load_datasets(&a.test)?) };

    let manifest = RunManifest::new(command_line(), &config, &paths(&[&a.data.train, &a.data.lexicons, &a.test]))?;
    let run_dir = a.runs_dir.join(a.run_id.clone().unwrap_or_else(|| manifest.run_id("train")));
    manifest.write(&run_dir)?;
    log::info!("run directory {}", run_dir.display());

    let cv = run_cv(&dataset, lexicons.as_ref(), &config, a.parallel_folds)?;
    let summary = write_cv_run(&run_dir, &cv, &dataset, &config)?;
    let mut reports = vec![validation_report(&dataset, &cv, &config)?];
    if let Some(test) = &test {
        let prepared = prepare_for(test, &cv.folds[0].1.model.encoder, lexicons.as_ref(), &config);
        let preds = predict_and_write(&cv.ensemble(), &prepared, &run_dir.join("predictions_test.tsv"))?;
        reports.extend(score_by_language(&preds, &prepared, Subtask::Multilingual, &config)?);
    }
    emit_report(&run_dir, &reports)?;
    print!("{}", render_summary(&reports));
    println!("mean validation weighted-F1 {:.4} over {} fold(s)", summary.mean_val_weighted_f1, summary.folds.len());
    println!("{}", run_dir.display());
    Ok(())
}

pub fn zeroshot(a: ZeroshotArgs) -> Result<()> {
    let run = load_run(&a.run).with_context(|| format!("loading run {}", a.run.display()))?;
    let target = load_datasets(&a.targets)?;
    let lexicons = load_lexicons(&a.lexicons)?;
    let out = a.out.unwrap_or_else(|| a.run.join("zeroshot"));
    let prepared = prepare_for(&target, &run.ensemble.models[0].encoder, lexicons.as_ref(), &run.config);
    let training: BTreeSet<String> = run.summary.training_languages.iter().cloned().collect();
    let outcomes = zero_shot_eval(&run.ensemble, &prepared, &training, &run.config.fingerprint(), run.config.seed)?;

    let mut reports = Vec::new();
    for outcome in outcomes {
        let lang = outcome.report.language.clone();
        if outcome.report.subtask == Subtask::SeenLanguage {
            eprintln!("warning: {lang} was a training language; its report is tagged seen-language, not zero-shot");
        }
        let dir = out.join(&lang);
        write_file(&dir.join("metrics.json"), outcome.report.to_json()?)?;
        let prefix = format!("{lang}:");
        let rows: Vec<(String, Polarity)> = outcome
            .predictions
            .into_iter()
            .map(|(id, p)| (id.strip_prefix(&prefix).map(str::to_string).unwrap_or(id), p))
            .collect();
        write_predictions(&dir.join("predictions.tsv"), &rows)?;
        reports.push(outcome.report);
    }
    emit_report(&out, &reports)?;
    print!("{}", render_summary(&reports));
    println!("{}", out.display());
    Ok(())
}

pub fn ablate(a: TrainArgs) -> Result<()> {
    let config = resolve_config(&a.config)?;
    let dataset = load_datasets(&a.data.train)?;
    let Some(lexicons) = load_lexicons(&a.data.lexicons)? else {
        bail!("ablate needs --lexicon files for its lexicon-on variants");
    };
    let test = if a.test.is_empty() { None } else { Some(load_datasets(&a.test)?) };

    let manifest = RunManifest::new(command_line(), &config, &paths(&[&a.data.train, &a.data.lexicons, &a.test]))?;
    let run_dir = a.runs_dir.join(a.run_id.clone().unwrap_or_else(|| manifest.run_id("ablate")));
    manifest.write(&run_dir)?;

    let runs = ablation_grid(&dataset, test.as_ref(), Some(&lexicons), &config, a.parallel_folds)?;
    let mut reports = Vec::new();
    for run in runs {
        let dir = run_dir.join(run.variant.name());
        RunManifest { config: run.config.clone(), config_hash: run.config.fingerprint(), ..manifest.clone() }.write(&dir)?;
        write_cv_run(&dir, &run.cv, &dataset, &run.config)?;
        if !run.predictions.is_empty() {
            write_predictions(&dir.join("predictions_test.tsv"), &run.predictions)?;
        }
        reports.push(run.report);
    }
    emit_report(&run_dir, &reports)?;
    print!("{}", render_summary(&reports));
    println!("{}", run_dir.display());
    Ok(())
}

pub fn report(a: ReportArgs) -> Result<()> {
    let mut reports = Vec::new();
    for dir in &a.runs {
        reports.extend(collect_reports(dir).with_context(|| format!("reading {}", dir.display()))?);
    }
    if reports.is_empty() {
        bail!("no scores.json found under the given directories");
    }
    if let Some(out) = &a.out {
        emit_report(out, &reports)?;
    }
    print!("{}", render_summary(&reports));
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let spec = ToySpec {
        languages: a.languages.split(',').map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect(),
        train_per_language: a.train_per_language,
        test_per_language: a.test_per_language,
        seed: a.seed,
        ..ToySpec::default()
    };
    let corpus = toy_corpus(&spec)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut written: Vec<PathBuf> = Vec::new();
    for lang in &spec.languages {
        for (split, data) in [("train", &corpus.train), ("test", &corpus.test)] {
            let ids: BTreeSet<String> = data.examples().iter().filter(|e| &e.language == lang).map(|e| e.id.clone()).collect();
            let path = a.out.join(format!("{lang}_{split}.tsv"));
            write_dataset(&path, &data.subset(&ids))?;
            written.push(path);
        }
        let path = a.out.join(format!("{lang}_lexicon.tsv"));
        write_lexicon(&path, corpus.lexicons.get(lang).expect("lexicon per language"))?;
        written.push(path);
    }
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

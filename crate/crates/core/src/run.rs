//! Run directories.
//!
//! ```text
//! <runs root>/<run id>/
//!     manifest.json  config.txt  summary.json
//!     fold<i>/checkpoint  fold<i>/metrics.json  fold<i>/log
//! ```
//!
//! The runs root is `$SACL_RUNS_DIR`, or `runs` when unset.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::render_config;
use crate::data::Dataset;
use crate::encoder::CompactEncoder;
use crate::error::{Error, Result};
use crate::eval::{language_tag, score, MetricsReport, Subtask};
use crate::trainer::{CvOutcome, FoldEnsemble, TrainConfig};

pub const RUNS_DIR_ENV: &str = "SACL_RUNS_DIR";

pub fn runs_root() -> PathBuf {
    std::env::var_os(RUNS_DIR_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Everything needed to replay a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config: TrainConfig,
    pub config_hash: String,
    /// Input path to SHA-256 digest.
    pub inputs: BTreeMap<String, String>,
    pub seed: u64,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: Vec<String>, config: &TrainConfig, inputs: &[PathBuf]) -> Result<Self> {
        let inputs = inputs
            .iter()
            .map(|p| Ok((p.display().to_string(), file_digest(p)?)))
            .collect::<Result<_>>()?;
        Ok(RunManifest {
            command,
            config: config.clone(),
            config_hash: config.fingerprint(),
            inputs,
            seed: config.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    /// `<name>-<digest of config and inputs>`: stable across replays.
    pub fn run_id(&self, name: &str) -> String {
        let mut h = Sha256::new();
        h.update(self.config_hash.as_bytes());
        for (path, digest) in &self.inputs {
            h.update(path.as_bytes());
            h.update(digest.as_bytes());
        }
        format!("{name}-{}", &hex::encode(h.finalize())[..12])
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write(&dir.join("manifest.json"), serde_json::to_string_pretty(self)? + "\n")?;
        write(&dir.join("config.txt"), render_config(&self.config))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub best_epoch: usize,
    pub best_val_weighted_f1: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub seed: u64,
    pub folds: Vec<FoldSummary>,
    pub mean_val_weighted_f1: f64,
    pub training_languages: Vec<String>,
}

fn write(path: &Path, contents: String) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn fold_dir(run_dir: &Path, fold_index: usize) -> PathBuf {
    run_dir.join(format!("fold{}", fold_index + 1))
}

/// Writes per-fold checkpoints, validation metrics and epoch logs plus the
/// top-level `summary.json`.
pub fn write_cv_run(run_dir: &Path, cv: &CvOutcome<CompactEncoder>, dataset: &Dataset, config: &TrainConfig) -> Result<RunSummary> {
    let hash = config.fingerprint();
    let mut folds = Vec::new();
    for (split, outcome) in &cv.folds {
        let dir = fold_dir(run_dir, split.fold_index);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        save_checkpoint(&dir.join("checkpoint"), &outcome.model, config)?;

        let val = dataset.subset(&split.val_ids);
        let golds: Vec<_> = val.examples().iter().map(|e| e.label).collect();
        let report = MetricsReport::new(&score(&outcome.val_predictions, &golds)?, Subtask::Validation, language_tag(&val), &hash, config.seed);
        write(&dir.join("metrics.json"), report.to_json()?)?;

        let mut log = String::from("epoch\ttrain_loss\tval_weighted_f1\tsteps\tadversarial_steps\n");
        for h in &outcome.history {
            let _ = writeln!(log, "{}\t{}\t{}\t{}\t{}", h.epoch, h.mean_train_loss, h.val_weighted_f1, h.steps, h.adversarial_steps);
        }
        let _ = writeln!(log, "# best epoch {} (validation weighted-F1 {})", outcome.best_epoch, outcome.best_val_f1);
        write(&dir.join("log"), log)?;

        folds.push(FoldSummary {
            fold: split.fold_index + 1,
            best_epoch: outcome.best_epoch,
            best_val_weighted_f1: outcome.best_val_f1,
            epochs_run: outcome.history.len(),
            stopped_early: outcome.stopped_early,
        });
    }
    let summary = RunSummary {
        config_hash: hash,
        seed: config.seed,
        folds,
        mean_val_weighted_f1: cv.mean_val_f1,
        training_languages: cv.training_languages.iter().cloned().collect(),
    };
    write(&run_dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

pub struct LoadedRun {
    pub ensemble: FoldEnsemble<CompactEncoder>,
    pub config: TrainConfig,
    pub summary: RunSummary,
}

/// Loads every fold checkpoint listed in a run's `summary.json`.
pub fn load_run(run_dir: &Path) -> Result<LoadedRun> {
    let path = run_dir.join("summary.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let summary: RunSummary = serde_json::from_str(&text)?;
    let mut models = Vec::new();
    let mut config = None;
    for fold in &summary.folds {
        let (model, c) = load_checkpoint(&fold_dir(run_dir, fold.fold - 1).join("checkpoint"))?;
        models.push(model);
        config = Some(c);
    }
    let config = config.ok_or_else(|| Error::Checkpoint(format!("{} lists no folds", path.display())))?;
    Ok(LoadedRun { ensemble: FoldEnsemble { models }, config, summary })
}

/// Collects the reports of every `scores.json` under `dir`, recursively, in
/// path order. Per-fold `metrics.json` files are not included.
pub fn collect_reports(dir: &Path) -> Result<Vec<MetricsReport>> {
    let mut paths = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = fs::read_dir(&d).map_err(|e| Error::io(&d, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "scores.json") {
                paths.push(path);
            }
        }
    }
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        out.extend(serde_json::from_str::<Vec<MetricsReport>>(&text)?);
    }
    Ok(out)
}

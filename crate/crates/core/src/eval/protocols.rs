//! Evaluation protocols: zero-shot transfer to unseen languages and the
//! four-way component ablation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{score, MetricsReport, Subtask};
use crate::data::{Dataset, LexiconSet, Polarity};
use crate::encoder::{CompactEncoder, EncoderContract};
use crate::error::{Error, Result};
use crate::trainer::{prepare_for, run_cv, CvOutcome, FoldEnsemble, PreparedExample, TrainConfig};

#[derive(Debug, Clone)]
pub struct ZeroShotOutcome {
    pub report: MetricsReport,
    pub predictions: Vec<(String, Polarity)>,
}

/// Scores `target` per language without updating any parameters. A target
/// language that appears in `training_languages` is evaluated anyway, with a
/// warning, and tagged [`Subtask::SeenLanguage`].
pub fn zero_shot_eval<E: EncoderContract>(
    ensemble: &FoldEnsemble<E>,
    target: &[PreparedExample],
    training_languages: &BTreeSet<String>,
    config_hash: &str,
    seed: u64,
) -> Result<Vec<ZeroShotOutcome>> {
    if target.is_empty() {
        return Err(Error::InvalidArgument("empty zero-shot target set".into()));
    }
    if ensemble.models.is_empty() {
        return Err(Error::InvalidArgument("no models to evaluate".into()));
    }
    let mut by_language: BTreeMap<&str, Vec<PreparedExample>> = BTreeMap::new();
    for ex in target {
        by_language.entry(ex.language.as_str()).or_default().push(ex.clone());
    }
    let mut out = Vec::with_capacity(by_language.len());
    for (language, examples) in by_language {
        let subtask = if training_languages.contains(language) {
            log::warn!("target language {language} was seen in training; report tagged {}", Subtask::SeenLanguage.as_str());
            Subtask::SeenLanguage
        } else {
            Subtask::ZeroShot
        };
        let preds = ensemble.predict(&examples)?;
        let golds: Vec<Polarity> = examples.iter().map(|e| e.label).collect();
        let report = MetricsReport::new(&score(&preds, &golds)?, subtask, language, config_hash, seed);
        let predictions = examples.iter().map(|e| e.id.clone()).zip(preds).collect();
        out.push(ZeroShotOutcome { report, predictions });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Full,
    WoLexicon,
    WoSacl,
    WoBoth,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] =
        [AblationVariant::Full, AblationVariant::WoLexicon, AblationVariant::WoSacl, AblationVariant::WoBoth];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::WoLexicon => "wo_lexicon",
            AblationVariant::WoSacl => "wo_sacl",
            AblationVariant::WoBoth => "wo_both",
        }
    }

    /// Derives the variant's configuration from the full one. Without SACL
    /// the contrastive weight is zero and the adversarial branch never runs.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut config = base.clone();
        if matches!(self, AblationVariant::WoLexicon | AblationVariant::WoBoth) {
            config.use_lexicon = false;
        }
        if matches!(self, AblationVariant::WoSacl | AblationVariant::WoBoth) {
            config.loss = config.loss.ce_only();
        }
        config
    }
}

pub struct AblationRun {
    pub variant: AblationVariant,
    pub config: TrainConfig,
    pub cv: CvOutcome<CompactEncoder>,
    pub report: MetricsReport,
    /// Test-set predictions when a test set was given.
    pub predictions: Vec<(String, Polarity)>,
}

/// The dataset's single language code, or `multilingual`.
pub fn language_tag(dataset: &Dataset) -> String {
    match dataset.languages().iter().collect::<Vec<_>>().as_slice() {
        [one] => one.to_string(),
        _ => "multilingual".to_string(),
    }
}

/// Out-of-fold validation report built from every trained fold's best
/// validation predictions.
pub fn validation_report(
    dataset: &Dataset,
    cv: &CvOutcome<CompactEncoder>,
    config: &TrainConfig,
) -> Result<MetricsReport> {
    let (mut preds, mut golds) = (Vec::new(), Vec::new());
    for (split, fold) in &cv.folds {
        preds.extend_from_slice(&fold.val_predictions);
        golds.extend(dataset.subset(&split.val_ids).examples().iter().map(|e| e.label));
    }
    Ok(MetricsReport::new(&score(&preds, &golds)?, Subtask::Validation, language_tag(dataset), config.fingerprint(), config.seed))
}

/// Trains the four ablation variants on `train`. Each report scores the fold
/// ensemble on `test` when given, otherwise the out-of-fold validation
/// predictions.
pub fn ablation_grid(
    train: &Dataset,
    test: Option<&Dataset>,
    lexicons: Option<&LexiconSet>,
    base: &TrainConfig,
    parallel_folds: usize,
) -> Result<Vec<AblationRun>> {
    if lexicons.is_none_or(LexiconSet::is_empty) {
        return Err(Error::InvalidArgument("the ablation grid needs lexicons for its lexicon-on variants".into()));
    }
    let base = TrainConfig { use_lexicon: true, ..base.clone() };
    let mut runs = Vec::with_capacity(4);
    for variant in AblationVariant::ALL {
        let config = variant.apply(&base);
        log::info!("ablation variant {} ({})", variant.name(), config.fingerprint());
        let cv = run_cv(train, lexicons, &config, parallel_folds)?;
        let (report, predictions) = match test {
            Some(test) => {
                let encoder = &cv.folds[0].1.model.encoder;
                let prepared = prepare_for(test, encoder, lexicons, &config);
                let preds = cv.ensemble().predict(&prepared)?;
                let golds: Vec<Polarity> = prepared.iter().map(|e| e.label).collect();
                let report = MetricsReport::new(
                    &score(&preds, &golds)?,
                    Subtask::Multilingual,
                    language_tag(test),
                    config.fingerprint(),
                    config.seed,
                );
                (report, prepared.iter().map(|e| e.id.clone()).zip(preds).collect())
            }
            None => (validation_report(train, &cv, &config)?, Vec::new()),
        };
        runs.push(AblationRun { variant, config, cv, report: report.with_run(variant.name()), predictions });
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variants_map_to_components() {
        let base = TrainConfig::default();
        let hashes: BTreeSet<String> = AblationVariant::ALL.iter().map(|v| v.apply(&base).fingerprint()).collect();
        assert_eq!(hashes.len(), 4);

        let full = AblationVariant::Full.apply(&base);
        assert_eq!(full, base);
        let wo_sacl = AblationVariant::WoSacl.apply(&base);
        assert!(wo_sacl.use_lexicon);
        assert_eq!((wo_sacl.loss.lambda, wo_sacl.loss.radius, wo_sacl.loss.rate), (0.0, 0.0, 0.0));
        let wo_both = AblationVariant::WoBoth.apply(&base);
        assert!(!wo_both.use_lexicon);
        assert_eq!(wo_both.loss.lambda, 0.0);
        assert!(!AblationVariant::WoLexicon.apply(&base).use_lexicon);
    }

    #[test]
    fn grid_requires_lexicons() {
        let ds = Dataset::new(Vec::new()).unwrap();
        assert!(ablation_grid(&ds, None, None, &TrainConfig::default(), 1).is_err());
    }
}

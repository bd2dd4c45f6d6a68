//! Scoring: per-category precision/recall/F1, support-weighted F1 and
//! confusion matrices with rows = gold labels, columns = predictions.

mod protocols;
mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Polarity;
use crate::error::{Error, Result};

pub use protocols::{ablation_grid, language_tag, validation_report, zero_shot_eval, AblationRun, AblationVariant, ZeroShotOutcome};
pub use report::{emit_report, language_rank, render_summary, TABLE_LANGUAGE_ORDER};

pub type Confusion = [[usize; Polarity::COUNT]; Polarity::COUNT];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    #[serde(rename = "p")]
    pub precision: f64,
    #[serde(rename = "r")]
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub per_class: [ClassMetrics; Polarity::COUNT],
    pub weighted_f1: f64,
    pub confusion: Confusion,
    /// Categories absent from the gold labels; their F1 is reported as 0.
    pub zero_support: Vec<Polarity>,
}

fn check_lengths(preds: &[Polarity], golds: &[Polarity]) -> Result<()> {
    if preds.len() != golds.len() {
        return Err(Error::Shape(format!("{} predictions for {} gold labels", preds.len(), golds.len())));
    }
    if golds.is_empty() {
        return Err(Error::InvalidArgument("cannot score an empty prediction set".into()));
    }
    Ok(())
}

pub fn confusion_counts(preds: &[Polarity], golds: &[Polarity]) -> Result<Confusion> {
    check_lengths(preds, golds)?;
    let mut m = [[0; Polarity::COUNT]; Polarity::COUNT];
    for (p, g) in preds.iter().zip(golds) {
        m[g.index()][p.index()] += 1;
    }
    Ok(m)
}

/// Row-normalized confusion; rows with no support stay all zero.
pub fn normalize_rows(counts: &Confusion) -> Vec<Vec<f64>> {
    counts
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.iter()
                .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                .collect()
        })
        .collect()
}

pub fn confusion_matrix(preds: &[Polarity], golds: &[Polarity], normalize: bool) -> Result<Vec<Vec<f64>>> {
    let counts = confusion_counts(preds, golds)?;
    Ok(if normalize {
        normalize_rows(&counts)
    } else {
        counts.iter().map(|r| r.iter().map(|&c| c as f64).collect()).collect()
    })
}

pub fn scores_from_confusion(m: &Confusion) -> Scores {
    let n: usize = m.iter().flatten().sum();
    let mut per_class = [ClassMetrics::default(); Polarity::COUNT];
    let mut zero_support = Vec::new();
    let mut weighted = 0.0;
    for c in 0..Polarity::COUNT {
        let tp = m[c][c] as f64;
        let support: usize = m[c].iter().sum();
        let predicted: usize = m.iter().map(|row| row[c]).sum();
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = if support == 0 { 0.0 } else { tp / support as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        if support == 0 {
            zero_support.push(Polarity::ALL[c]);
        }
        weighted += support as f64 / n as f64 * f1;
        per_class[c] = ClassMetrics { precision, recall, f1, support };
    }
    Scores { per_class, weighted_f1: weighted, confusion: *m, zero_support }
}

pub fn score(preds: &[Polarity], golds: &[Polarity]) -> Result<Scores> {
    Ok(scores_from_confusion(&confusion_counts(preds, golds)?))
}

pub fn weighted_f1(preds: &[Polarity], golds: &[Polarity]) -> Result<f64> {
    score(preds, golds).map(|s| s.weighted_f1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subtask {
    Validation,
    Multilingual,
    ZeroShot,
    /// A zero-shot request whose target language was seen in training.
    SeenLanguage,
}

impl Subtask {
    pub fn as_str(self) -> &'static str {
        match self {
            Subtask::Validation => "validation",
            Subtask::Multilingual => "multilingual",
            Subtask::ZeroShot => "zero-shot",
            Subtask::SeenLanguage => "seen-language",
        }
    }
}

/// The `metrics.json` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub subtask: Subtask,
    pub language: String,
    pub weighted_f1: f64,
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub confusion: Vec<Vec<usize>>,
    pub confusion_normalized: Vec<Vec<f64>>,
    pub config_hash: String,
    pub seed: u64,
    #[serde(default)]
    pub zero_support: Vec<String>,
    /// Optional run or variant name shown in summaries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<String>,
}

impl MetricsReport {
    pub fn new(scores: &Scores, subtask: Subtask, language: impl Into<String>, config_hash: impl Into<String>, seed: u64) -> Self {
        MetricsReport {
            subtask,
            language: language.into(),
            weighted_f1: scores.weighted_f1,
            per_class: Polarity::ALL
                .iter()
                .map(|p| (p.to_string(), scores.per_class[p.index()]))
                .collect(),
            confusion: scores.confusion.iter().map(|r| r.to_vec()).collect(),
            confusion_normalized: normalize_rows(&scores.confusion),
            config_hash: config_hash.into(),
            seed,
            zero_support: scores.zero_support.iter().map(|p| p.to_string()).collect(),
            run: None,
        }
    }

    pub fn with_run(mut self, run: impl Into<String>) -> Self {
        self.run = Some(run.into());
        self
    }

    pub fn from_predictions(
        preds: &[Polarity],
        golds: &[Polarity],
        subtask: Subtask,
        language: impl Into<String>,
        config_hash: impl Into<String>,
        seed: u64,
    ) -> Result<Self> {
        Ok(Self::new(&score(preds, golds)?, subtask, language, config_hash, seed))
    }

    /// Stable JSON: keys sorted, shortest round-trip floats.
    pub fn to_json(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        Ok(serde_json::to_string_pretty(&value)? + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use Polarity::*;

    #[test]
    fn perfect_predictions() {
        let g = [Positive, Negative, Neutral, Neutral];
        assert_eq!(weighted_f1(&g, &g).unwrap(), 1.0);
        let norm = confusion_matrix(&g, &g, true).unwrap();
        assert_eq!(norm, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
    }

    #[test]
    fn worked_example_by_tally() {
        let golds = [Positive, Positive, Negative, Negative, Neutral];
        let preds = [Positive, Negative, Negative, Negative, Neutral];
        // tally: positive p=1 r=.5 f=2/3; negative p=2/3 r=1 f=.8; neutral f=1
        let expected = 0.4 * (2.0 / 3.0) + 0.4 * 0.8 + 0.2 * 1.0;
        let got = weighted_f1(&preds, &golds).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(got, 0.7867, epsilon = 1e-4);
    }

    #[test]
    fn all_positive_predictions_fill_first_column() {
        let golds = [Positive, Negative, Neutral, Negative];
        let preds = [Positive; 4];
        let norm = confusion_matrix(&preds, &golds, true).unwrap();
        for row in norm {
            assert_eq!(row, vec![1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn zero_support_is_flagged() {
        let s = score(&[Positive, Neutral], &[Positive, Positive]).unwrap();
        assert_eq!(s.zero_support, vec![Negative, Neutral]);
        assert_eq!(s.per_class[Neutral.index()].f1, 0.0);
        let r = MetricsReport::new(&s, Subtask::Validation, "hau", "abc", 1);
        assert_eq!(r.confusion_normalized[1], vec![0.0, 0.0, 0.0]);
        assert_eq!(r.zero_support, vec!["negative", "neutral"]);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(weighted_f1(&[Positive], &[Positive, Negative]).is_err());
        assert!(weighted_f1(&[], &[]).is_err());
    }

    #[test]
    fn metrics_json_schema() {
        let r = MetricsReport::from_predictions(&[Positive, Negative], &[Positive, Neutral], Subtask::ZeroShot, "tir", "h", 7).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        for key in ["subtask", "language", "weighted_f1", "per_class", "confusion", "confusion_normalized", "config_hash", "seed"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["subtask"], "zero-shot");
        assert_eq!(v["per_class"]["positive"]["support"], 1);
        assert!(v["per_class"]["negative"].get("p").is_some());
        assert_eq!(r.to_json().unwrap(), r.to_json().unwrap());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pairs() -> impl Strategy<Value = Vec<(Polarity, Polarity)>> {
            let p = prop::sample::select(Polarity::ALL.to_vec());
            prop::collection::vec((p.clone(), p), 1..60)
        }

        proptest! {
            #[test]
            fn normalized_rows_sum_to_one(v in pairs()) {
                let (p, g): (Vec<_>, Vec<_>) = v.into_iter().unzip();
                let counts = confusion_counts(&p, &g).unwrap();
                for (row, counts) in confusion_matrix(&p, &g, true).unwrap().iter().zip(counts) {
                    let s: f64 = row.iter().sum();
                    if counts.iter().sum::<usize>() == 0 {
                        prop_assert_eq!(s, 0.0);
                    } else {
                        prop_assert!((s - 1.0).abs() < 1e-9);
                    }
                }
            }

            #[test]
            fn joint_permutation_invariance(v in pairs(), seed: u64) {
                use rand::{seq::SliceRandom, SeedableRng};
                let (p, g): (Vec<_>, Vec<_>) = v.iter().copied().unzip();
                let mut shuffled = v.clone();
                shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let (ps, gs): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
                prop_assert_eq!(score(&p, &g).unwrap(), score(&ps, &gs).unwrap());
            }

            #[test]
            fn weighted_f1_is_support_weighted_mean(v in pairs()) {
                let (p, g): (Vec<_>, Vec<_>) = v.into_iter().unzip();
                let s = score(&p, &g).unwrap();
                let n = g.len() as f64;
                let mean: f64 = s.per_class.iter().map(|c| c.support as f64 / n * c.f1).sum();
                prop_assert!((mean - s.weighted_f1).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&s.weighted_f1));
            }
        }
    }
}

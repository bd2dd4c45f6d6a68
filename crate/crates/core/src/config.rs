//! Flat `key = value` configuration files.
//!
//! Keys follow the hyperparameter table in snake_case. Blank lines and lines
//! starting with `#` are ignored. Later assignments win, so command-line
//! overrides are applied by feeding them after the file.

use std::fs;
use std::path::Path;

use crate::data::Stratify;
use crate::error::{Error, Result};
use crate::objective::{PositiveRule, Reduction};
use crate::trainer::{FoldMode, TrainConfig};

/// Every accepted key, in rendering order.
pub const KEYS: [&str; 29] = [
    "hidden_size",
    "num_layers",
    "num_heads",
    "ffn_size",
    "vocab_size",
    "perturbation_radius",
    "perturbation_rate",
    "lambda",
    "lambda_adv",
    "temperature",
    "temperature_adv",
    "reduction",
    "positives",
    "epochs",
    "patience",
    "batch_size",
    "learning_rate",
    "weight_decay",
    "dropout",
    "max_token_length",
    "max_prefix_tokens",
    "use_lexicon",
    "class_weights",
    "label_weights",
    "seed",
    "folds",
    "fold_mode",
    "stratify",
    "layer_norm_eps",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid value {value:?} for {key}"))),
    }
}

/// Sets one key on `config`.
pub fn apply_setting(config: &mut TrainConfig, key: &str, value: &str) -> Result<()> {
    let value = value.trim();
    let bad = || Error::Config(format!("invalid value {value:?} for {key}"));
    match key.trim() {
        "hidden_size" => config.encoder.hidden_size = parse(key, value)?,
        "num_layers" => config.encoder.num_layers = parse(key, value)?,
        "num_heads" => config.encoder.num_heads = parse(key, value)?,
        "ffn_size" => config.encoder.ffn_size = parse(key, value)?,
        "vocab_size" => config.encoder.vocab_size = parse(key, value)?,
        "perturbation_radius" => config.loss.radius = parse(key, value)?,
        "perturbation_rate" => config.loss.rate = parse(key, value)?,
        "lambda" => config.loss.lambda = parse(key, value)?,
        "lambda_adv" => config.loss.lambda_adv = parse(key, value)?,
        "temperature" => config.loss.temperature = parse(key, value)?,
        "temperature_adv" => config.loss.temperature_adv = parse(key, value)?,
        "reduction" => {
            config.loss.reduction = match value {
                "sum" => Reduction::Sum,
                "mean" => Reduction::Mean,
                _ => return Err(bad()),
            }
        }
        "positives" => {
            config.loss.positives = match value {
                "gold" => PositiveRule::Gold,
                "predicted" => PositiveRule::Predicted,
                _ => return Err(bad()),
            }
        }
        "epochs" => config.epochs = parse(key, value)?,
        "patience" => config.patience = parse(key, value)?,
        "batch_size" => config.batch_size = parse(key, value)?,
        "learning_rate" => config.learning_rate = parse(key, value)?,
        "weight_decay" => config.weight_decay = parse(key, value)?,
        "dropout" => config.encoder.dropout = parse(key, value)?,
        "max_token_length" => config.encoder.max_len = parse(key, value)?,
        "max_prefix_tokens" => config.encoder.max_prefix_tokens = parse(key, value)?,
        "use_lexicon" => config.use_lexicon = parse_bool(key, value)?,
        "class_weights" => config.class_weights = parse_bool(key, value)?,
        "label_weights" => {
            let w: Vec<f64> = value.split(',').map(|v| parse(key, v.trim())).collect::<Result<_>>()?;
            let w: [f64; 3] = w.try_into().map_err(|_| bad())?;
            config.loss.label_weights.0 = w;
        }
        "seed" => config.seed = parse(key, value)?,
        "folds" => config.folds = parse(key, value)?,
        "fold_mode" => {
            config.fold_mode = match value {
                "all" => FoldMode::All,
                "first" | "fold1" => FoldMode::First,
                _ => return Err(bad()),
            }
        }
        "stratify" => {
            config.stratify = match value {
                "label" => Stratify::Label,
                "language_label" => Stratify::LanguageAndLabel,
                _ => return Err(bad()),
            }
        }
        "layer_norm_eps" => config.encoder.layer_norm_eps = parse(key, value)?,
        other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
    }
    Ok(())
}

/// Applies every `key = value` line of `text` on top of `base`.
pub fn parse_config(text: &str, base: TrainConfig) -> Result<TrainConfig> {
    let mut config = base;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", n + 1)))?;
        apply_setting(&mut config, key, value)?;
    }
    Ok(config)
}

pub fn load_config(path: &Path, base: TrainConfig) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, base)
}

fn value_of(config: &TrainConfig, key: &str) -> String {
    let l = &config.loss;
    let e = &config.encoder;
    match key {
        "hidden_size" => e.hidden_size.to_string(),
        "num_layers" => e.num_layers.to_string(),
        "num_heads" => e.num_heads.to_string(),
        "ffn_size" => e.ffn_size.to_string(),
        "vocab_size" => e.vocab_size.to_string(),
        "perturbation_radius" => l.radius.to_string(),
        "perturbation_rate" => l.rate.to_string(),
        "lambda" => l.lambda.to_string(),
        "lambda_adv" => l.lambda_adv.to_string(),
        "temperature" => l.temperature.to_string(),
        "temperature_adv" => l.temperature_adv.to_string(),
        "reduction" => match l.reduction {
            Reduction::Sum => "sum".into(),
            Reduction::Mean => "mean".into(),
        },
        "positives" => match l.positives {
            PositiveRule::Gold => "gold".into(),
            PositiveRule::Predicted => "predicted".into(),
        },
        "epochs" => config.epochs.to_string(),
        "patience" => config.patience.to_string(),
        "batch_size" => config.batch_size.to_string(),
        "learning_rate" => config.learning_rate.to_string(),
        "weight_decay" => config.weight_decay.to_string(),
        "dropout" => e.dropout.to_string(),
        "max_token_length" => e.max_len.to_string(),
        "max_prefix_tokens" => e.max_prefix_tokens.to_string(),
        "use_lexicon" => config.use_lexicon.to_string(),
        "class_weights" => config.class_weights.to_string(),
        "label_weights" => l.label_weights.0.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        "seed" => config.seed.to_string(),
        "folds" => config.folds.to_string(),
        "fold_mode" => match config.fold_mode {
            FoldMode::All => "all".into(),
            FoldMode::First => "first".into(),
        },
        "stratify" => match config.stratify {
            Stratify::Label => "label".into(),
            Stratify::LanguageAndLabel => "language_label".into(),
        },
        "layer_norm_eps" => e.layer_norm_eps.to_string(),
        _ => unreachable!("unlisted key {key}"),
    }
}

/// Renders every key; parsing the result reproduces `config`.
pub fn render_config(config: &TrainConfig) -> String {
    KEYS.iter().map(|k| format!("{k} = {}\n", value_of(config, k))).collect()
}

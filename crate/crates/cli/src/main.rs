mod commands;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use inputs::LangPath;

/// Lexicon-prefixed, contrastive and adversarial sentiment classification.
#[derive(Parser)]
#[command(name = "sacl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write stratified k-fold id lists for a dataset.
    Splits(SplitsArgs),
    /// Cross-validated training; writes a run directory.
    Train(TrainArgs),
    /// Evaluate a trained run on languages it was not trained on.
    Zeroshot(ZeroshotArgs),
    /// Train the four component-ablation variants.
    Ablate(TrainArgs),
    /// Merge metrics from run directories into one table.
    Report(ReportArgs),
    /// Generate a synthetic multi-language corpus with lexicons.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Training file as LANG=PATH, or PATH with the language taken from the
    /// file name (`hau_train.tsv` -> `hau`). Repeat for several languages.
    #[arg(long = "train", required = true, num_args = 1)]
    train: Vec<LangPath>,
    /// Lexicon file as LANG=PATH (phrase<TAB>polarity rows).
    #[arg(long = "lexicon")]
    lexicons: Vec<LangPath>,
}

#[derive(Args)]
struct SplitsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Stratify by `label` or by `language_label`.
    #[arg(long, default_value = "label")]
    stratify: String,
    /// Output file.
    #[arg(long, default_value = "folds.json")]
    out: PathBuf,
}

/// Hyperparameter sources, lowest precedence first: built-in defaults, the
/// `--config` file, `--set` assignments, then the named flags.
#[derive(Args, Default)]
struct ConfigArgs {
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra key=value assignment; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    max_token_length: Option<usize>,
    #[arg(long)]
    hidden_size: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_adv: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    temperature_adv: Option<f64>,
    #[arg(long = "fgm-radius", alias = "perturbation-radius")]
    fgm_radius: Option<f64>,
    #[arg(long = "fgm-rate", alias = "perturbation-rate")]
    fgm_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    /// Train only the first fold.
    #[arg(long)]
    fold1: bool,
    /// Bypass lexicon prefixes.
    #[arg(long)]
    no_lexicon: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Held-out test file(s) scored with the fold ensemble.
    #[arg(long = "test")]
    test: Vec<LangPath>,
    /// Run directory name; defaults to a digest of config and inputs.
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long, env = "SACL_RUNS_DIR", default_value = "runs")]
    runs_dir: PathBuf,
    /// Folds trained concurrently.
    #[arg(long, default_value_t = 1)]
    parallel_folds: usize,
}

#[derive(Args)]
struct ZeroshotArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    /// Target file(s) as LANG=PATH or PATH.
    #[arg(long = "target", required = true)]
    targets: Vec<LangPath>,
    #[arg(long = "lexicon")]
    lexicons: Vec<LangPath>,
    /// Output directory; defaults to `<run>/zeroshot`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories (searched recursively for metrics files).
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Also write the merged report files here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated language codes.
    #[arg(long, default_value = "xa,xb,xc")]
    languages: String,
    #[arg(long, default_value_t = 2000)]
    train_per_language: usize,
    #[arg(long, default_value_t = 500)]
    test_per_language: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Splits(a) => commands::splits(a),
        Command::Train(a) => commands::train(a),
        Command::Zeroshot(a) => commands::zeroshot(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Report(a) => commands::report(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

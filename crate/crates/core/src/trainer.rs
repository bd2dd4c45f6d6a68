//! Training: the per-step clean + adversarial update, early-stopped fold
//! training, k-fold cross-validation and fold ensembles.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{compute_label_weights, stratified_kfold, Dataset, FoldSplit, LexiconSet, Polarity, Stratify};
use crate::encoder::{CompactConfig, CompactEncoder, EmbeddingMatrix, EncoderContract, TokenSequence, TrainableEncoder};
use crate::error::{Error, Result};
use crate::eval::weighted_f1;
use crate::lexicon_prefix::{prefixed_input, LexiconMatcher};
use crate::objective::{
    classifier_logits, fgm_perturbation, head_backward, predict, sacl_loss, soft_scl_loss_grad, ClassifierHead,
    HeadGrads, LossConfig, SoftSclParts,
};
use crate::optim::{AdamConfig, AdamW};
use crate::seed::{derive_seed, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldMode {
    /// Train every fold.
    #[default]
    All,
    /// Train only the first fold.
    First,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub loss: LossConfig,
    /// Replace `loss.label_weights` with inverse-frequency weights of the
    /// training data.
    pub class_weights: bool,
    /// Encoder shape, dropout and maximum token length. Its `seed` is derived
    /// from `seed` when a model is built.
    pub encoder: CompactConfig,
    pub use_lexicon: bool,
    pub folds: usize,
    pub fold_mode: FoldMode,
    pub stratify: Stratify,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            patience: 3,
            batch_size: 128,
            learning_rate: 1e-5,
            weight_decay: 1e-2,
            seed: 42,
            loss: LossConfig::default(),
            class_weights: true,
            encoder: CompactConfig::default(),
            use_lexicon: true,
            folds: 5,
            fold_mode: FoldMode::All,
            stratify: Stratify::Label,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return bad("epochs, patience and batch_size must be positive");
        }
        if self.patience > self.epochs {
            return bad("patience cannot exceed epochs");
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("learning_rate must be positive and weight_decay non-negative");
        }
        if self.folds < 2 {
            return bad("folds must be at least 2");
        }
        self.loss.validate()?;
        self.encoder.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, weight_decay: self.weight_decay, ..AdamConfig::default() }
    }

    pub fn model_seed(&self) -> u64 {
        derive_seed(self.seed, "model-init", 0)
    }

    /// Short stable hash of the full configuration.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_value(self).expect("config serializes");
        let digest = Sha256::digest(canonical.to_string().as_bytes());
        hex::encode(&digest[..8])
    }
}

/// An example tokenized for the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedExample {
    pub id: String,
    pub language: String,
    pub label: Polarity,
    pub tokens: TokenSequence,
}

/// Composes (optionally lexicon-prefixed) inputs and tokenizes them.
pub fn prepare<E: EncoderContract>(
    dataset: &Dataset,
    encoder: &E,
    lexicons: Option<&LexiconSet>,
    max_len: usize,
    max_prefix_tokens: usize,
) -> Vec<PreparedExample> {
    let mut matchers: BTreeMap<&str, Option<LexiconMatcher>> = BTreeMap::new();
    dataset
        .examples()
        .iter()
        .map(|ex| {
            let matcher = matchers
                .entry(ex.language.as_str())
                .or_insert_with(|| lexicons.and_then(|l| l.get(&ex.language)).map(LexiconMatcher::new));
            let input = prefixed_input(&ex.text, matcher.as_ref(), max_prefix_tokens);
            PreparedExample {
                id: ex.id.clone(),
                language: ex.language.clone(),
                label: ex.label,
                tokens: encoder.tokenize(&input, max_len),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<E> {
    pub encoder: E,
    pub head: ClassifierHead,
}

impl Model<CompactEncoder> {
    pub fn compact(config: &TrainConfig) -> Result<Self> {
        let seed = config.model_seed();
        let encoder = CompactEncoder::new(CompactConfig { seed, ..config.encoder.clone() })?;
        let head = ClassifierHead::new(encoder.hidden_size(), seed);
        Ok(Model { encoder, head })
    }
}

impl<E: EncoderContract> Model<E> {
    /// Evaluation-mode pooled representations, one row per example.
    pub fn pooled(&self, examples: &[&PreparedExample]) -> Result<Array2<f64>> {
        let mut h = Array2::zeros((examples.len(), self.encoder.hidden_size()));
        for (mut row, ex) in h.axis_iter_mut(Axis(0)).zip(examples) {
            row.assign(&self.encoder.encode(&ex.tokens)?.pooled);
        }
        Ok(h)
    }

    pub fn logits(&self, examples: &[&PreparedExample]) -> Result<Array2<f64>> {
        classifier_logits(self.pooled(examples)?.view(), &self.head)
    }

    pub fn predict(&self, examples: &[PreparedExample]) -> Result<Vec<Polarity>> {
        let mut out = Vec::with_capacity(examples.len());
        for chunk in examples.chunks(256) {
            let refs: Vec<&PreparedExample> = chunk.iter().collect();
            out.extend(predict(&self.logits(&refs)?));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub clean: f64,
    pub adversarial: Option<f64>,
    pub total: f64,
}

/// Single-writer training state for one model.
pub struct Trainer<E: TrainableEncoder> {
    pub model: Model<E>,
    loss: LossConfig,
    optimizer: AdamW,
    grads: E::Grads,
    head_grads: HeadGrads,
    step: usize,
    seed: u64,
    dropout: bool,
}

struct BranchResult {
    parts: SoftSclParts,
    d_emb: Vec<EmbeddingMatrix>,
}

impl<E: TrainableEncoder> Trainer<E> {
    pub fn new(model: Model<E>, loss: LossConfig, adam: AdamConfig, seed: u64) -> Self {
        let grads = model.encoder.zero_grads();
        let head_grads = HeadGrads {
            weight: Array2::zeros(model.head.weight.raw_dim()),
            bias: ndarray::Array1::zeros(model.head.bias.len()),
        };
        Trainer { model, loss, optimizer: AdamW::new(adam), grads, head_grads, step: 0, seed, dropout: true }
    }

    /// Dropout on (training mode) or off (evaluation mode) for subsequent
    /// steps.
    pub fn set_dropout(&mut self, enabled: bool) {
        self.dropout = enabled;
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn loss_config(&self) -> &LossConfig {
        &self.loss
    }

    /// Gradients accumulated by the most recent step.
    pub fn gradients(&self) -> (&E::Grads, &HeadGrads) {
        (&self.grads, &self.head_grads)
    }

    fn divergence(&self, branch: &'static str) -> Error {
        let head = self.head_grads.weight.iter().chain(&self.head_grads.bias).map(|v| v * v).sum::<f64>();
        let encoder = self.model.encoder.grad_norm(&self.grads);
        Error::Divergence { step: self.step, branch, grad_norm: (encoder * encoder + head).sqrt() }
    }

    fn branch(
        &mut self,
        batch: &[&PreparedExample],
        embs: &[EmbeddingMatrix],
        lambda: f64,
        tau: f64,
        branch: &'static str,
        step_seed: u64,
    ) -> Result<BranchResult> {
        let encoder = &self.model.encoder;
        let mut h = Array2::zeros((batch.len(), encoder.hidden_size()));
        let mut caches = Vec::with_capacity(batch.len());
        for (i, (ex, emb)) in batch.iter().zip(embs).enumerate() {
            let mut rng = rng_for(step_seed, branch, i as u64);
            let forward = encoder.forward_train(emb, ex.tokens.mask(), self.dropout.then_some(&mut rng));
            let (out, cache) = match forward {
                Err(Error::NonFinite(_)) => return Err(self.divergence(branch)),
                other => other?,
            };
            h.row_mut(i).assign(&out.pooled);
            caches.push(cache);
        }
        let labels: Vec<Polarity> = batch.iter().map(|e| e.label).collect();
        let z = classifier_logits(h.view(), &self.model.head)?;
        let loss = &self.loss;
        let parts = match soft_scl_loss_grad(&z, &labels, &loss.label_weights, lambda, tau, loss.reduction, loss.positives) {
            Ok(parts) if parts.total.is_finite() => parts,
            Ok(_) | Err(Error::NonFinite(_)) => return Err(self.divergence(branch)),
            Err(e) => return Err(e),
        };
        let encoder = &self.model.encoder;
        let (hg, dh) = head_backward(h.view(), &self.model.head, &parts.dz);
        self.head_grads.weight += &hg.weight;
        self.head_grads.bias += &hg.bias;
        let d_emb = caches
            .iter()
            .zip(dh.axis_iter(Axis(0)))
            .map(|(cache, d)| encoder.backward(cache, d, &mut self.grads))
            .collect();
        Ok(BranchResult { parts, d_emb })
    }

    /// Clean branch, then (with probability `rate`) the adversarial branch on
    /// embeddings shifted by the FGM perturbation of the clean embedding
    /// gradient. Gradients of both branches accumulate; the perturbation
    /// itself is discarded.
    pub fn accumulate_gradients(&mut self, batch: &[&PreparedExample]) -> Result<StepLosses> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        self.model.encoder.reset_grads(&mut self.grads);
        self.head_grads.weight.fill(0.0);
        self.head_grads.bias.fill(0.0);

        let step_seed = derive_seed(self.seed, "step", self.step as u64);
        let run_adversarial = rng_for(step_seed, "branch", 0).gen::<f64>() < self.loss.rate;

        let embs = batch
            .iter()
            .map(|ex| self.model.encoder.embed(&ex.tokens))
            .collect::<Result<Vec<_>>>()?;
        let (lambda, tau) = (self.loss.lambda, self.loss.temperature);
        let clean = self.branch(batch, &embs, lambda, tau, "clean", step_seed)?;
        for (ex, d) in batch.iter().zip(&clean.d_emb) {
            self.model.encoder.add_embedding_grad(&mut self.grads, &ex.tokens, d);
        }

        let mut adversarial = None;
        if run_adversarial {
            let perturbed = embs
                .iter()
                .zip(&clean.d_emb)
                .map(|(e, g)| Ok(EmbeddingMatrix(&e.0 + &fgm_perturbation(g, self.loss.radius)?.0)))
                .collect::<Result<Vec<_>>>()?;
            let (lambda, tau) = (self.loss.lambda_adv, self.loss.temperature_adv);
            let adv = self.branch(batch, &perturbed, lambda, tau, "adversarial", step_seed)?;
            for (ex, d) in batch.iter().zip(&adv.d_emb) {
                self.model.encoder.add_embedding_grad(&mut self.grads, &ex.tokens, d);
            }
            adversarial = Some(adv.parts.total);
        }
        let losses = StepLosses {
            clean: clean.parts.total,
            adversarial,
            total: sacl_loss(clean.parts.total, adversarial),
        };
        Ok(losses)
    }

    pub fn train_step(&mut self, batch: &[&PreparedExample]) -> Result<StepLosses> {
        let losses = self.accumulate_gradients(batch)?;
        let mut params = self.model.encoder.params_and_grads(&self.grads);
        params.push((self.model.head.weight.as_slice_mut().unwrap(), self.head_grads.weight.as_slice().unwrap()));
        params.push((self.model.head.bias.as_slice_mut().unwrap(), self.head_grads.bias.as_slice().unwrap()));
        self.optimizer.step(params);
        self.step += 1;
        Ok(losses)
    }
}

/// Tracks the best validation score and the epochs since it last improved.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    since_improvement: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: None, since_improvement: 0 }
    }

    /// Records an epoch's score; returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, score: f64) -> (bool, bool) {
        let improved = self.best.is_none_or(|(_, best)| score > best);
        if improved {
            self.best = Some((epoch, score));
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        (improved, self.since_improvement >= self.patience)
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    pub fn since_improvement(&self) -> usize {
        self.since_improvement
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub steps: usize,
    pub adversarial_steps: usize,
    pub val_weighted_f1: f64,
}

#[derive(Debug, Clone)]
pub struct FoldOutcome<E> {
    /// Parameters from the best validation epoch.
    pub model: Model<E>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub stopped_early: bool,
    pub val_predictions: Vec<Polarity>,
}

/// Trains with per-epoch shuffling and early stopping on validation
/// weighted-F1; returns the best snapshot.
pub fn train_model<E: TrainableEncoder>(
    model: Model<E>,
    train: &[PreparedExample],
    val: &[PreparedExample],
    config: &TrainConfig,
    loss: &LossConfig,
) -> Result<FoldOutcome<E>> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument("empty train or validation partition".into()));
    }
    let mut trainer = Trainer::new(model, loss.clone(), config.adam(), derive_seed(config.seed, "train", 0));
    let golds: Vec<Polarity> = val.iter().map(|e| e.label).collect();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut history = Vec::new();
    let mut best = (trainer.model.clone(), Vec::new());
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng_for(config.seed, "epoch", epoch as u64));
        let (mut loss_sum, mut steps, mut adversarial_steps) = (0.0, 0, 0);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&PreparedExample> = chunk.iter().map(|&i| &train[i]).collect();
            let losses = trainer.train_step(&batch)?;
            loss_sum += losses.total;
            steps += 1;
            adversarial_steps += usize::from(losses.adversarial.is_some());
        }
        let preds = trainer.model.predict(val)?;
        let f1 = weighted_f1(&preds, &golds)?;
        history.push(EpochRecord {
            epoch,
            mean_train_loss: loss_sum / steps as f64,
            steps,
            adversarial_steps,
            val_weighted_f1: f1,
        });
        log::info!("epoch {epoch}: train loss {:.5}, val w-F1 {f1:.4}", loss_sum / steps as f64);
        let (improved, stop) = stopper.observe(epoch, f1);
        if improved {
            best = (trainer.model.clone(), preds);
        }
        if stop {
            stopped_early = epoch < config.epochs;
            break;
        }
    }
    let (best_epoch, best_val_f1) = stopper.best().expect("at least one epoch ran");
    Ok(FoldOutcome { model: best.0, history, best_epoch, best_val_f1, stopped_early, val_predictions: best.1 })
}

/// Label weights used for a dataset under `config`.
pub fn resolve_loss(dataset: &Dataset, config: &TrainConfig) -> Result<LossConfig> {
    let mut loss = config.loss.clone();
    if config.class_weights {
        loss.label_weights = compute_label_weights(dataset)?;
    }
    Ok(loss)
}

pub fn lexicons_for<'a>(config: &TrainConfig, lexicons: Option<&'a LexiconSet>) -> Option<&'a LexiconSet> {
    lexicons.filter(|_| config.use_lexicon)
}

pub fn prepare_for(dataset: &Dataset, encoder: &CompactEncoder, lexicons: Option<&LexiconSet>, config: &TrainConfig) -> Vec<PreparedExample> {
    prepare(
        dataset,
        encoder,
        lexicons_for(config, lexicons),
        config.encoder.max_len,
        config.encoder.max_prefix_tokens,
    )
}

/// Trains one fold of `dataset`.
pub fn train_fold(
    fold: &FoldSplit,
    dataset: &Dataset,
    lexicons: Option<&LexiconSet>,
    config: &TrainConfig,
) -> Result<FoldOutcome<CompactEncoder>> {
    config.validate()?;
    let model = Model::compact(config)?;
    let loss = resolve_loss(dataset, config)?;
    let train = dataset.subset(&fold.train_ids);
    let val = dataset.subset(&fold.val_ids);
    let train = prepare_for(&train, &model.encoder, lexicons, config);
    let val = prepare_for(&val, &model.encoder, lexicons, config);
    train_model(model, &train, &val, config, &loss)
}

pub struct CvOutcome<E> {
    pub folds: Vec<(FoldSplit, FoldOutcome<E>)>,
    pub mean_val_f1: f64,
    pub training_languages: BTreeSet<String>,
}

impl<E: Clone> CvOutcome<E> {
    pub fn ensemble(&self) -> FoldEnsemble<E> {
        FoldEnsemble { models: self.folds.iter().map(|(_, f)| f.model.clone()).collect() }
    }
}

/// Stratified k-fold training. Every fold starts from the same seed
/// schedule; `parallel_folds > 1` trains folds on separate threads.
pub fn run_cv(
    dataset: &Dataset,
    lexicons: Option<&LexiconSet>,
    config: &TrainConfig,
    parallel_folds: usize,
) -> Result<CvOutcome<CompactEncoder>> {
    config.validate()?;
    let mut splits = stratified_kfold(dataset, config.folds, config.seed, config.stratify)?;
    if config.fold_mode == FoldMode::First {
        splits.truncate(1);
    }
    let mut results: Vec<Option<Result<FoldOutcome<CompactEncoder>>>> = (0..splits.len()).map(|_| None).collect();
    for group in (0..splits.len()).collect::<Vec<_>>().chunks(parallel_folds.max(1)) {
        std::thread::scope(|scope| {
            let handles: Vec<_> = group
                .iter()
                .map(|&i| {
                    let split = &splits[i];
                    (i, scope.spawn(move || train_fold(split, dataset, lexicons, config)))
                })
                .collect();
            for (i, handle) in handles {
                results[i] = Some(handle.join().expect("fold thread panicked"));
            }
        });
    }
    let mut folds = Vec::with_capacity(splits.len());
    for (split, result) in splits.into_iter().zip(results) {
        folds.push((split, result.expect("every fold ran")?));
    }
    let mean_val_f1 = folds.iter().map(|(_, f)| f.best_val_f1).sum::<f64>() / folds.len() as f64;
    Ok(CvOutcome { folds, mean_val_f1, training_languages: dataset.languages().clone() })
}

/// Majority vote per position; ties go to the earliest category.
pub fn majority_vote(votes: &[Vec<Polarity>]) -> Vec<Polarity> {
    let n = votes.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            let mut counts = [0usize; Polarity::COUNT];
            for v in votes {
                counts[v[i].index()] += 1;
            }
            let mut best = 0;
            for c in 1..Polarity::COUNT {
                if counts[c] > counts[best] {
                    best = c;
                }
            }
            Polarity::ALL[best]
        })
        .collect()
}

/// The fold models used jointly at prediction time.
#[derive(Debug, Clone)]
pub struct FoldEnsemble<E> {
    pub models: Vec<Model<E>>,
}

impl<E: EncoderContract> FoldEnsemble<E> {
    pub fn predict(&self, examples: &[PreparedExample]) -> Result<Vec<Polarity>> {
        let votes = self.models.iter().map(|m| m.predict(examples)).collect::<Result<Vec<_>>>()?;
        Ok(majority_vote(&votes))
    }
}

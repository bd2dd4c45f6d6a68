//! Classifier head and the training objective.
//!
//! The per-branch objective is `L_CE + lambda * L_SCL` over the logits
//! `z = W h + b`. The contrastive term uses unnormalized dot products of
//! logits with temperature `tau`; an anchor's positives are the other batch
//! members sharing its label, and the denominator runs over every other batch
//! member. Anchors without positives contribute zero. The full objective adds
//! the same loss evaluated on embeddings shifted by an FGM perturbation.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{LabelWeights, Polarity};
use crate::encoder::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

/// Which labels decide contrastive positives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositiveRule {
    #[default]
    Gold,
    /// Batch members sharing the anchor's current argmax prediction.
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda: f64,
    pub temperature: f64,
    pub lambda_adv: f64,
    pub temperature_adv: f64,
    /// FGM radius (Frobenius norm of each sample's perturbation).
    pub radius: f64,
    /// Probability of running the adversarial branch at a step.
    pub rate: f64,
    pub reduction: Reduction,
    pub positives: PositiveRule,
    pub label_weights: LabelWeights,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 0.1,
            temperature: 0.1,
            lambda_adv: 0.1,
            temperature_adv: 0.1,
            radius: 0.5,
            rate: 1.0,
            reduction: Reduction::Sum,
            positives: PositiveRule::Gold,
            label_weights: LabelWeights::uniform(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature_adv > 0.0) {
            return Err(Error::Config("temperatures must be positive".into()));
        }
        if !(self.radius >= 0.0) {
            return Err(Error::Config("perturbation radius must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::Config("perturbation rate must lie in [0, 1]".into()));
        }
        if self.label_weights.0.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("label weights must be positive".into()));
        }
        Ok(())
    }

    /// Class-weighted cross-entropy only: no contrastive term and no
    /// adversarial branch.
    pub fn ce_only(&self) -> LossConfig {
        LossConfig { lambda: 0.0, lambda_adv: 0.0, radius: 0.0, rate: 0.0, ..self.clone() }
    }
}

/// Standard deviation of the initial head weights.
pub const HEAD_INIT_STD: f64 = 0.02;

/// Linear map from pooled representations to the three polarity logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    /// Shape `(d_h, 3)`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ClassifierHead {
    pub fn new(hidden_size: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, "head-init", 0);
        let normal = Normal::new(0.0, HEAD_INIT_STD).unwrap();
        ClassifierHead {
            weight: Array2::from_shape_fn((hidden_size, Polarity::COUNT), |_| normal.sample(&mut rng)),
            bias: Array1::zeros(Polarity::COUNT),
        }
    }

    pub fn zeros(hidden_size: usize) -> Self {
        ClassifierHead { weight: Array2::zeros((hidden_size, Polarity::COUNT)), bias: Array1::zeros(Polarity::COUNT) }
    }

    pub fn hidden_size(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// `z = h W + b` for a batch of pooled rows.
pub fn classifier_logits(h: ArrayView2<f64>, head: &ClassifierHead) -> Result<Array2<f64>> {
    if h.ncols() != head.hidden_size() {
        return Err(Error::Shape(format!(
            "pooled width {} does not match head input {}",
            h.ncols(),
            head.hidden_size()
        )));
    }
    Ok(h.dot(&head.weight) + &head.bias)
}

/// Gradients of a loss through the head given `dL/dz`; returns the head
/// gradients and `dL/dh`.
pub fn head_backward(h: ArrayView2<f64>, head: &ClassifierHead, dz: &Array2<f64>) -> (HeadGrads, Array2<f64>) {
    let grads = HeadGrads { weight: h.t().dot(dz), bias: dz.sum_axis(Axis(0)) };
    (grads, dz.dot(&head.weight.t()))
}

pub fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut p = z.clone();
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row /= total;
    }
    p
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn check_batch(z: &Array2<f64>, y: &[Polarity]) -> Result<()> {
    if z.nrows() != y.len() || z.ncols() != Polarity::COUNT {
        return Err(Error::Shape(format!("logits {:?} for {} labels", z.dim(), y.len())));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    Ok(())
}

fn reduce(total: f64, batch: usize, reduction: Reduction) -> f64 {
    match reduction {
        Reduction::Sum => total,
        Reduction::Mean => total / batch.max(1) as f64,
    }
}

/// Class-weighted cross-entropy and its gradient with respect to `z`.
pub fn ce_loss_grad(
    z: &Array2<f64>,
    y: &[Polarity],
    weights: &LabelWeights,
    reduction: Reduction,
) -> Result<(f64, Array2<f64>)> {
    check_batch(z, y)?;
    let scale = reduce(1.0, y.len(), reduction);
    let mut dz = softmax_rows(z);
    let mut total = 0.0;
    for (i, &label) in y.iter().enumerate() {
        let row = z.row(i);
        let w = weights.get(label);
        total += w * (log_sum_exp(row.iter().copied()) - row[label.index()]);
        dz[[i, label.index()]] -= 1.0;
        dz.row_mut(i).mapv_inplace(|v| v * w * scale);
    }
    Ok((reduce(total, y.len(), reduction), dz))
}

pub fn ce_loss(z: &Array2<f64>, y: &[Polarity], weights: &LabelWeights, reduction: Reduction) -> Result<f64> {
    ce_loss_grad(z, y, weights, reduction).map(|(l, _)| l)
}

/// Supervised contrastive loss and its gradient with respect to `z`.
pub fn scl_loss_grad(
    z: &Array2<f64>,
    y: &[Polarity],
    tau: f64,
    reduction: Reduction,
    rule: PositiveRule,
) -> Result<(f64, Array2<f64>)> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    check_batch(z, y)?;
    let b = y.len();
    let groups: Vec<Polarity> = match rule {
        PositiveRule::Gold => y.to_vec(),
        PositiveRule::Predicted => predict(z),
    };
    let sims = z.dot(&z.t()) / tau;
    let scale = reduce(1.0, b, reduction);
    let mut dz = Array2::zeros(z.raw_dim());
    let mut total = 0.0;
    for i in 0..b {
        let positives: Vec<usize> = (0..b).filter(|&e| e != i && groups[e] == groups[i]).collect();
        if positives.is_empty() {
            continue;
        }
        let others = (0..b).filter(|&a| a != i);
        let lse = log_sum_exp(others.clone().map(|a| sims[[i, a]]));
        let n_pos = positives.len() as f64;
        total += lse - positives.iter().map(|&e| sims[[i, e]]).sum::<f64>() / n_pos;

        // dL_i/dsim(i, a) = (softmax_a - [a positive] / |P|) / tau
        for a in others {
            let mut coef = (sims[[i, a]] - lse).exp();
            if groups[a] == groups[i] {
                coef -= 1.0 / n_pos;
            }
            let coef = coef * scale / tau;
            let (zi, za) = (z.row(i).to_owned(), z.row(a).to_owned());
            dz.row_mut(i).scaled_add(coef, &za);
            dz.row_mut(a).scaled_add(coef, &zi);
        }
    }
    Ok((reduce(total, b, reduction), dz))
}

pub fn scl_loss(z: &Array2<f64>, y: &[Polarity], tau: f64, reduction: Reduction) -> Result<f64> {
    scl_loss_grad(z, y, tau, reduction, PositiveRule::Gold).map(|(l, _)| l)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftSclParts {
    pub ce: f64,
    pub scl: f64,
    pub total: f64,
    pub dz: Array2<f64>,
}

/// `L_CE + lambda * L_SCL` with its gradient. With `lambda == 0` the
/// contrastive term is skipped entirely, so the value and gradient are those
/// of the cross-entropy alone, bit for bit.
pub fn soft_scl_loss_grad(
    z: &Array2<f64>,
    y: &[Polarity],
    weights: &LabelWeights,
    lambda: f64,
    tau: f64,
    reduction: Reduction,
    rule: PositiveRule,
) -> Result<SoftSclParts> {
    let (ce, mut dz) = ce_loss_grad(z, y, weights, reduction)?;
    if lambda == 0.0 {
        return Ok(SoftSclParts { ce, scl: 0.0, total: ce, dz });
    }
    let (scl, dscl) = scl_loss_grad(z, y, tau, reduction, rule)?;
    dz.scaled_add(lambda, &dscl);
    Ok(SoftSclParts { ce, scl, total: ce + lambda * scl, dz })
}

pub fn soft_scl_loss(
    z: &Array2<f64>,
    y: &[Polarity],
    weights: &LabelWeights,
    lambda: f64,
    tau: f64,
    reduction: Reduction,
) -> Result<f64> {
    soft_scl_loss_grad(z, y, weights, lambda, tau, reduction, PositiveRule::Gold).map(|p| p.total)
}

/// FGM step `r = eps * g / ||g||_F` over the whole matrix; zero when `g` is.
pub fn fgm_perturbation(g: &EmbeddingMatrix, radius: f64) -> Result<EmbeddingMatrix> {
    g.check_finite("embedding gradient")?;
    let norm = g.frobenius_norm();
    if norm == 0.0 {
        return Ok(EmbeddingMatrix(Array2::zeros(g.0.raw_dim())));
    }
    Ok(EmbeddingMatrix(g.0.mapv(|v| radius * v / norm)))
}

/// Total objective: the clean branch plus the adversarial branch when it ran.
pub fn sacl_loss(clean: f64, adversarial: Option<f64>) -> f64 {
    clean + adversarial.unwrap_or(0.0)
}

/// Argmax per row; ties go to the earliest category (positive, negative,
/// neutral).
pub fn predict(z: &Array2<f64>) -> Vec<Polarity> {
    z.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            Polarity::ALL[best]
        })
        .collect()
}

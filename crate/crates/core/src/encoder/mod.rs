//! Encoders turn composed inputs into pooled representations.
//!
//! [`EncoderContract`] is the inference surface (tokenize, embed, encode) and
//! [`TrainableEncoder`] adds what the trainer needs: a training-mode forward
//! pass with a cache, a backward pass that also returns the gradient with
//! respect to the embedding matrix (the input the adversarial branch
//! perturbs), and parameter access for the optimizer. The crate ships
//! [`CompactEncoder`]; a pretrained multilingual model can be attached by
//! implementing the same traits.

mod compact;
mod tokenizer;

use ndarray::{Array1, Array2, ArrayView1};
use rand_chacha::ChaCha8Rng;

pub use compact::{CompactConfig, CompactEncoder, CompactGrads};
pub use tokenizer::{HashingTokenizer, TokenSequence, BOS_ID, PAD_ID, RESERVED_IDS, SEP_ID};

use crate::error::{Error, Result};
use crate::lexicon_prefix::ComposedInput;

/// Maximum token length.
pub const DEFAULT_MAX_LEN: usize = 250;

/// Token embeddings of one sequence, shape `(len, d_emb)`, before positional
/// terms are added.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix(pub Array2<f64>);

impl EmbeddingMatrix {
    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.0.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }
}

/// Pooled begin-marker representation of the last layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub pooled: Array1<f64>,
}

pub trait EncoderContract {
    fn hidden_size(&self) -> usize;

    fn tokenize(&self, input: &ComposedInput, max_len: usize) -> TokenSequence;

    fn embed(&self, tokens: &TokenSequence) -> Result<EmbeddingMatrix>;

    /// Evaluation-mode encoding (no dropout).
    fn encode_from_embeddings(&self, emb: &EmbeddingMatrix, mask: &[u8]) -> Result<EncoderOutput>;

    fn encode(&self, tokens: &TokenSequence) -> Result<EncoderOutput> {
        let emb = self.embed(tokens)?;
        self.encode_from_embeddings(&emb, tokens.mask())
    }
}

pub trait TrainableEncoder: EncoderContract + Clone {
    type Cache;
    type Grads;

    /// Forward pass keeping what [`TrainableEncoder::backward`] needs.
    /// `dropout` is the training-mode RNG; `None` runs in evaluation mode.
    fn forward_train(
        &self,
        emb: &EmbeddingMatrix,
        mask: &[u8],
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<(EncoderOutput, Self::Cache)>;

    /// Accumulates parameter gradients (excluding the embedding lookup) into
    /// `grads` and returns the gradient with respect to the embedding matrix.
    fn backward(&self, cache: &Self::Cache, d_pooled: ArrayView1<f64>, grads: &mut Self::Grads) -> EmbeddingMatrix;

    /// Routes an embedding-matrix gradient back into the lookup table.
    fn add_embedding_grad(&self, grads: &mut Self::Grads, tokens: &TokenSequence, d_emb: &EmbeddingMatrix);

    fn zero_grads(&self) -> Self::Grads;

    fn reset_grads(&self, grads: &mut Self::Grads);

    /// L2 norm over every accumulated parameter gradient.
    fn grad_norm(&self, grads: &Self::Grads) -> f64;

    /// Parameters paired with their gradients, in a fixed order.
    fn params_and_grads<'a>(&'a mut self, grads: &'a Self::Grads) -> Vec<(&'a mut [f64], &'a [f64])>;
}

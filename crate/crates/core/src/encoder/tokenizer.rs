use serde::{Deserialize, Serialize};

use crate::lexicon_prefix::{ComposedInput, DEFAULT_MAX_PREFIX_TOKENS};
use crate::seed::fnv1a;
use crate::text::segment;

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const SEP_ID: u32 = 2;
/// Ids below this are special markers (the last one is unused).
pub const RESERVED_IDS: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    ids: Vec<u32>,
    mask: Vec<u8>,
    /// Index of the separator that closes the prefix segment.
    prefix_end: usize,
}

impl TokenSequence {
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of non-padding tokens.
    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix_end - 1
    }

    /// Appends padding up to `len` tokens.
    pub fn padded_to(&self, len: usize) -> TokenSequence {
        let mut out = self.clone();
        while out.ids.len() < len {
            out.ids.push(PAD_ID);
            out.mask.push(0);
        }
        out
    }

    /// Replaces the id at `pos` (test helper for mask checks).
    pub fn with_id(&self, pos: usize, id: u32) -> TokenSequence {
        let mut out = self.clone();
        out.ids[pos] = id;
        out
    }
}

/// Whitespace and punctuation segmentation with lowercasing, words hashed
/// (FNV-1a) into a fixed vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashingTokenizer {
    pub vocab_size: u32,
    pub max_prefix_tokens: usize,
}

impl HashingTokenizer {
    pub fn new(vocab_size: u32) -> Self {
        assert!(vocab_size > RESERVED_IDS, "vocabulary must exceed the reserved ids");
        HashingTokenizer { vocab_size, max_prefix_tokens: DEFAULT_MAX_PREFIX_TOKENS }
    }

    pub fn word_id(&self, word: &str) -> u32 {
        RESERVED_IDS + (fnv1a(word.as_bytes()) % u64::from(self.vocab_size - RESERVED_IDS)) as u32
    }

    /// Layout `[BOS] prefix [SEP] text [SEP]`; a single-segment input has an
    /// empty prefix. Over-long inputs lose text tokens from the tail first.
    pub fn tokenize(&self, input: &ComposedInput, max_len: usize) -> TokenSequence {
        assert!(max_len >= 4, "max_len must be at least 4");
        let capacity = max_len - 3;
        let mut prefix: Vec<u32> = input
            .prefix()
            .map(|p| segment(p).iter().map(|w| self.word_id(w)).collect())
            .unwrap_or_default();
        prefix.truncate(self.max_prefix_tokens.min(capacity));
        let mut text: Vec<u32> = segment(input.text()).iter().map(|w| self.word_id(w)).collect();
        text.truncate(capacity - prefix.len());

        let mut ids = Vec::with_capacity(prefix.len() + text.len() + 3);
        ids.push(BOS_ID);
        ids.extend(&prefix);
        let prefix_end = ids.len();
        ids.push(SEP_ID);
        ids.extend(&text);
        ids.push(SEP_ID);
        let mask = vec![1; ids.len()];
        TokenSequence { ids, mask, prefix_end }
    }
}

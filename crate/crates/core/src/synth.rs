//! Synthetic corpora: three-way labelled "tweets" built from per-language
//! class-indicative words mixed with noise words, plus matching lexicons.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Example, Lexicon, LexiconEntry, LexiconSet, Polarity};
use crate::error::Result;
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq)]
pub struct ToySpec {
    pub languages: Vec<String>,
    pub train_per_language: usize,
    pub test_per_language: usize,
    /// Class-indicative words per category per language.
    pub class_words: usize,
    /// Noise words per language.
    pub noise_words: usize,
    /// Class words in each text.
    pub signal_per_text: usize,
    /// Inclusive range of noise words in each text.
    pub noise_per_text: (usize, usize),
    /// Probability that a text also carries one class word of another category.
    pub distractor_rate: f64,
    /// Fraction of each language's positive and negative class words that are
    /// listed in its lexicon.
    pub lexicon_coverage: f64,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            languages: vec!["xa".into(), "xb".into(), "xc".into()],
            train_per_language: 2000,
            test_per_language: 500,
            class_words: 12,
            noise_words: 300,
            signal_per_text: 2,
            noise_per_text: (4, 10),
            distractor_rate: 0.2,
            lexicon_coverage: 0.5,
            seed: 0,
        }
    }
}

pub struct ToyCorpus {
    pub train: Dataset,
    pub test: Dataset,
    pub lexicons: LexiconSet,
}

struct Vocabulary {
    class: [Vec<String>; Polarity::COUNT],
    noise: Vec<String>,
}

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "ch"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

fn pseudo_word(rng: &mut ChaCha8Rng, used: &mut BTreeSet<String>) -> String {
    loop {
        let syllables = rng.gen_range(2..=4);
        let word: String = (0..syllables)
            .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
            .collect();
        if used.insert(word.clone()) {
            return word;
        }
    }
}

fn sample_text(spec: &ToySpec, vocab: &Vocabulary, label: Polarity, rng: &mut ChaCha8Rng) -> String {
    let mut words: Vec<&str> = Vec::new();
    for _ in 0..spec.signal_per_text {
        words.push(vocab.class[label.index()].choose(rng).unwrap());
    }
    if rng.gen::<f64>() < spec.distractor_rate {
        let other = Polarity::ALL[(label.index() + rng.gen_range(1..Polarity::COUNT)) % Polarity::COUNT];
        words.push(vocab.class[other.index()].choose(rng).unwrap());
    }
    let noise = rng.gen_range(spec.noise_per_text.0..=spec.noise_per_text.1);
    for _ in 0..noise {
        words.push(vocab.noise.choose(rng).unwrap());
    }
    words.shuffle(rng);
    words.join(" ")
}

/// Generates train and test splits and one lexicon per language. Word lists
/// of different languages are disjoint.
pub fn toy_corpus(spec: &ToySpec) -> Result<ToyCorpus> {
    let mut used = BTreeSet::new();
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut lexicons = LexiconSet::new();
    for (li, lang) in spec.languages.iter().enumerate() {
        let mut rng = rng_for(spec.seed, "toy-vocab", li as u64);
        let mut words = |n: usize| (0..n).map(|_| pseudo_word(&mut rng, &mut used)).collect::<Vec<_>>();
        let vocab = Vocabulary {
            class: [words(spec.class_words), words(spec.class_words), words(spec.class_words)],
            noise: words(spec.noise_words),
        };
        let listed = ((spec.class_words as f64) * spec.lexicon_coverage).round() as usize;
        let entries = [Polarity::Positive, Polarity::Negative]
            .iter()
            .flat_map(|&p| {
                vocab.class[p.index()][..listed].iter().map(move |w| LexiconEntry { phrase: w.clone(), polarity: p })
            })
            .collect();
        lexicons.insert(Lexicon::new(lang.clone(), entries)?);

        let mut rng = rng_for(spec.seed, "toy-text", li as u64);
        for (split, n, out) in [("train", spec.train_per_language, &mut train), ("test", spec.test_per_language, &mut test)] {
            for i in 0..n {
                let label = Polarity::ALL[i % Polarity::COUNT];
                out.push(Example {
                    id: format!("{lang}_{split}_{i:05}"),
                    text: sample_text(spec, &vocab, label, &mut rng),
                    label,
                    language: lang.clone(),
                });
            }
        }
    }
    Ok(ToyCorpus { train: Dataset::new(train)?, test: Dataset::new(test)?, lexicons })
}

/// Uniformly random labels for `n` examples.
pub fn random_labels(n: usize, seed: u64) -> Vec<Polarity> {
    let mut rng = rng_for(seed, "random-labels", 0);
    (0..n).map(|_| Polarity::ALL[rng.gen_range(0..Polarity::COUNT)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon_prefix::{match_lexicon, LexiconMatcher};

    fn small() -> ToySpec {
        ToySpec { train_per_language: 30, test_per_language: 9, ..ToySpec::default() }
    }

    #[test]
    fn shapes_and_balance() {
        let c = toy_corpus(&small()).unwrap();
        assert_eq!(c.train.len(), 90);
        assert_eq!(c.test.len(), 27);
        assert_eq!(c.train.label_counts(), [30, 30, 30]);
        assert_eq!(c.lexicons.languages().len(), 3);
        assert_eq!(c.lexicons.get("xa").unwrap().len(), 12);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = toy_corpus(&small()).unwrap();
        let b = toy_corpus(&small()).unwrap();
        assert_eq!(a.train, b.train);
        let c = toy_corpus(&ToySpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn vocabularies_are_disjoint_across_languages() {
        let c = toy_corpus(&small()).unwrap();
        let words = |lang: &str| -> BTreeSet<String> {
            c.train.examples().iter().filter(|e| e.language == lang).flat_map(|e| e.text.split(' ').map(String::from)).collect()
        };
        assert!(words("xa").is_disjoint(&words("xb")));
        let xc = c.lexicons.get("xc").unwrap();
        let matcher = LexiconMatcher::new(xc);
        assert!(c.train.examples().iter().filter(|e| e.language == "xa").all(|e| matcher.find(&e.text).is_empty()));
        assert!(c.train.examples().iter().filter(|e| e.language == "xc").any(|e| !match_lexicon(&e.text, xc).is_empty()));
    }
}

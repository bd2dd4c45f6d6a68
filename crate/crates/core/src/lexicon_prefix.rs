//! Lexicon matching and prefix composition.
//!
//! A tweet's matched lexicon phrases are rendered as a polarity-grouped prefix
//! such as `positive: good, great | negative: bad`, which becomes the first
//! segment of the encoder input. The prefix carries the polarities of matched
//! lexicon entries, never the example's gold label, so training and inference
//! see the same input.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{Lexicon, Polarity};
use crate::text::segment;

/// Prefix token budget.
pub const DEFAULT_MAX_PREFIX_TOKENS: usize = 64;

const GROUP_SEPARATOR: &str = " | ";
const PHRASE_SEPARATOR: &str = ", ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconMatch {
    /// The matched lexicon phrase in normalized (segmented, lowercased) form.
    pub phrase: String,
    pub polarity: Polarity,
}

/// Token-level phrase matcher built once per lexicon.
#[derive(Debug, Clone, Default)]
pub struct LexiconMatcher {
    // first token -> (phrase tokens, polarity), longest phrases first
    by_first: HashMap<String, Vec<(Vec<String>, Polarity)>>,
}

impl LexiconMatcher {
    pub fn new(lexicon: &Lexicon) -> Self {
        let mut by_first: HashMap<String, Vec<(Vec<String>, Polarity)>> = HashMap::new();
        for entry in lexicon.entries() {
            let tokens = segment(&entry.phrase);
            let Some(first) = tokens.first().cloned() else { continue };
            let bucket = by_first.entry(first).or_default();
            if !bucket.iter().any(|(t, _)| *t == tokens) {
                bucket.push((tokens, entry.polarity));
            }
        }
        for bucket in by_first.values_mut() {
            bucket.sort_by(|a, b| b.0.len().cmp(&a.0.len()));
        }
        LexiconMatcher { by_first }
    }

    /// Finds lexicon phrases on token boundaries, ignoring case.
    ///
    /// Candidate spans are accepted longest first (leftmost among equals);
    /// any span overlapping an accepted one is dropped. The result is in text
    /// order.
    pub fn find(&self, text: &str) -> Vec<LexiconMatch> {
        let tokens = segment(text);
        let mut candidates: Vec<(usize, usize, Polarity)> = Vec::new();
        for start in 0..tokens.len() {
            if let Some(bucket) = self.by_first.get(&tokens[start]) {
                for (phrase, polarity) in bucket {
                    let end = start + phrase.len();
                    if end <= tokens.len() && tokens[start..end] == phrase[..] {
                        candidates.push((start, end, *polarity));
                    }
                }
            }
        }
        candidates.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));

        let mut covered = vec![false; tokens.len()];
        let mut accepted = Vec::new();
        for (start, end, polarity) in candidates {
            if covered[start..end].iter().any(|&c| c) {
                continue;
            }
            covered[start..end].iter_mut().for_each(|c| *c = true);
            accepted.push((start, end, polarity));
        }
        accepted.sort_by_key(|m| m.0);
        accepted
            .into_iter()
            .map(|(start, end, polarity)| LexiconMatch { phrase: tokens[start..end].join(" "), polarity })
            .collect()
    }
}

pub fn match_lexicon(text: &str, lexicon: &Lexicon) -> Vec<LexiconMatch> {
    LexiconMatcher::new(lexicon).find(text)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PrefixSpec {
    /// Polarity groups in fixed order (positive, then negative); phrases in
    /// text order, unique within a group.
    pub groups: Vec<(Polarity, Vec<String>)>,
    pub max_prefix_tokens: usize,
}

impl PrefixSpec {
    pub fn render(&self) -> String {
        self.groups
            .iter()
            .map(|(polarity, phrases)| format!("{polarity}: {}", phrases.join(PHRASE_SEPARATOR)))
            .collect::<Vec<_>>()
            .join(GROUP_SEPARATOR)
    }

    pub fn token_count(&self) -> usize {
        segment(&self.render()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Groups matches by polarity and drops whole phrases from the tail until the
/// rendered prefix fits the token budget.
pub fn build_prefix(matches: &[LexiconMatch], max_prefix_tokens: usize) -> (PrefixSpec, String) {
    let mut groups: Vec<(Polarity, Vec<String>)> = Vec::new();
    for polarity in [Polarity::Positive, Polarity::Negative] {
        let mut phrases: Vec<String> = Vec::new();
        for m in matches.iter().filter(|m| m.polarity == polarity) {
            if !phrases.contains(&m.phrase) {
                phrases.push(m.phrase.clone());
            }
        }
        if !phrases.is_empty() {
            groups.push((polarity, phrases));
        }
    }
    let mut spec = PrefixSpec { groups, max_prefix_tokens };
    while spec.token_count() > max_prefix_tokens {
        let Some((_, phrases)) = spec.groups.last_mut() else { break };
        phrases.pop();
        if phrases.is_empty() {
            spec.groups.pop();
        }
    }
    let rendered = spec.render();
    (spec, rendered)
}

/// Encoder input made of one (text) or two (prefix, text) segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposedInput {
    pub segments: Vec<String>,
}

impl ComposedInput {
    pub fn prefix(&self) -> Option<&str> {
        (self.segments.len() == 2).then(|| self.segments[0].as_str())
    }

    pub fn text(&self) -> &str {
        self.segments.last().map(String::as_str).unwrap_or("")
    }
}

pub fn compose_input(prefix: &str, text: &str) -> ComposedInput {
    let segments = if prefix.is_empty() {
        vec![text.to_string()]
    } else {
        vec![prefix.to_string(), text.to_string()]
    };
    ComposedInput { segments }
}

/// Full prefix pipeline for one text; `None` disables the lexicon.
pub fn prefixed_input(text: &str, matcher: Option<&LexiconMatcher>, max_prefix_tokens: usize) -> ComposedInput {
    match matcher {
        Some(m) => {
            let (_, rendered) = build_prefix(&m.find(text), max_prefix_tokens);
            compose_input(&rendered, text)
        }
        None => compose_input("", text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LexiconEntry;

    fn lex(entries: &[(&str, Polarity)]) -> Lexicon {
        Lexicon::new(
            "x",
            entries
                .iter()
                .map(|(p, pol)| LexiconEntry { phrase: p.to_string(), polarity: *pol })
                .collect(),
        )
        .unwrap()
    }

    fn m(phrase: &str, polarity: Polarity) -> LexiconMatch {
        LexiconMatch { phrase: phrase.into(), polarity }
    }

    /// Brute force: test every token span against every lexicon phrase, then
    /// repeatedly take the longest (leftmost) surviving span and discard
    /// everything overlapping it.
    fn brute_force(text: &str, lexicon: &Lexicon) -> Vec<LexiconMatch> {
        let tokens = segment(text);
        let mut spans = Vec::new();
        for i in 0..tokens.len() {
            for j in i + 1..=tokens.len() {
                let span = tokens[i..j].join(" ");
                for e in lexicon.entries() {
                    if segment(&e.phrase).join(" ") == span {
                        spans.push((i, j, e.polarity));
                        break;
                    }
                }
            }
        }
        let mut chosen = Vec::new();
        while !spans.is_empty() {
            let best = (0..spans.len())
                .max_by(|&a, &b| {
                    let (la, lb) = (spans[a].1 - spans[a].0, spans[b].1 - spans[b].0);
                    la.cmp(&lb).then(spans[b].0.cmp(&spans[a].0))
                })
                .unwrap();
            let pick = spans[best];
            chosen.push(pick);
            spans.retain(|s| s.1 <= pick.0 || s.0 >= pick.1);
        }
        chosen.sort_by_key(|s| s.0);
        chosen.into_iter().map(|(i, j, p)| m(&tokens[i..j].join(" "), p)).collect()
    }

    #[test]
    fn matches_in_text_order() {
        let l = lex(&[("good", Polarity::Positive), ("bad", Polarity::Negative)]);
        assert_eq!(
            match_lexicon("good day, bad luck", &l),
            vec![m("good", Polarity::Positive), m("bad", Polarity::Negative)]
        );
        assert!(match_lexicon("nothing here", &l).is_empty());
        assert!(match_lexicon("goodness", &l).is_empty());
    }

    #[test]
    fn longest_match_suppresses_inner() {
        let l = lex(&[("not good", Polarity::Negative), ("good", Polarity::Positive)]);
        let got = match_lexicon("not good enough", &l);
        assert_eq!(got, vec![m("not good", Polarity::Negative)]);
        assert_eq!(got, brute_force("not good enough", &l));
    }

    #[test]
    fn longer_overlapping_span_wins_over_earlier_shorter() {
        let l = lex(&[("a b", Polarity::Positive), ("b c d", Polarity::Negative)]);
        let got = match_lexicon("a b c d", &l);
        assert_eq!(got, vec![m("b c d", Polarity::Negative)]);
        assert_eq!(got, brute_force("a b c d", &l));
    }

    #[test]
    fn prefix_rendering() {
        let (_, s) = build_prefix(&[m("good", Polarity::Positive), m("bad", Polarity::Negative)], 64);
        assert_eq!(s, "positive: good | negative: bad");
        assert_eq!(build_prefix(&[], 64).1, "");
        let (spec, s) = build_prefix(&[m("great", Polarity::Positive), m("fine", Polarity::Positive)], 64);
        assert_eq!(s, "positive: great, fine");
        assert_eq!(spec.groups.len(), 1);
        // negative first in the text still renders positive first
        let (_, s) = build_prefix(&[m("bad", Polarity::Negative), m("good", Polarity::Positive), m("good", Polarity::Positive)], 64);
        assert_eq!(s, "positive: good | negative: bad");
    }

    #[test]
    fn prefix_budget_drops_tail_phrases() {
        let matches = [
            m("good", Polarity::Positive),
            m("very nice", Polarity::Positive),
            m("bad", Polarity::Negative),
            m("awful", Polarity::Negative),
        ];
        // full: positive : good , very nice | negative : bad , awful = 12 tokens
        assert_eq!(build_prefix(&matches, 12).0.token_count(), 12);
        assert_eq!(build_prefix(&matches, 11).1, "positive: good, very nice | negative: bad");
        assert_eq!(build_prefix(&matches, 9).1, "positive: good, very nice");
        assert_eq!(build_prefix(&matches, 4).1, "positive: good");
        assert_eq!(build_prefix(&matches, 2).1, "");
    }

    #[test]
    fn compose_segments() {
        assert_eq!(compose_input("positive: good", "good day").segments, ["positive: good", "good day"]);
        assert_eq!(compose_input("", "hello").segments, ["hello"]);
        let l = lex(&[("good", Polarity::Positive)]);
        let matcher = LexiconMatcher::new(&l);
        let with = prefixed_input("so good", Some(&matcher), 64);
        assert_eq!(with.prefix(), Some("positive: good"));
        assert_eq!(with.text(), "so good");
        // empty lexicon is exactly the unprefixed pipeline
        let empty = LexiconMatcher::new(&lex(&[]));
        assert_eq!(prefixed_input("so good", Some(&empty), 64), prefixed_input("so good", None, 64));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        const WORDS: &[&str] = &["a", "b", "c", "good", "bad", "not", "very"];

        fn arb_text() -> impl Strategy<Value = String> {
            prop::collection::vec((prop::sample::select(WORDS), any::<bool>()), 0..12).prop_map(|ws| {
                ws.into_iter()
                    .map(|(w, up)| if up { w.to_uppercase() } else { w.to_string() })
                    .collect::<Vec<_>>()
                    .join(" ")
            })
        }

        fn arb_lexicon() -> impl Strategy<Value = Lexicon> {
            prop::collection::vec((prop::collection::vec(prop::sample::select(WORDS), 1..4), any::<bool>()), 0..8)
                .prop_map(|entries| {
                    Lexicon::new(
                        "x",
                        entries
                            .into_iter()
                            .map(|(ws, pos)| LexiconEntry {
                                phrase: ws.join(" "),
                                polarity: if pos { Polarity::Positive } else { Polarity::Negative },
                            })
                            .collect(),
                    )
                    .unwrap()
                })
        }

        proptest! {
            #[test]
            fn matcher_equals_brute_force(text in arb_text(), l in arb_lexicon()) {
                prop_assert_eq!(match_lexicon(&text, &l), brute_force(&text, &l));
            }

            #[test]
            fn matching_ignores_case_and_is_idempotent(text in arb_text(), l in arb_lexicon()) {
                let once = match_lexicon(&text, &l);
                prop_assert_eq!(&once, &match_lexicon(&text.to_lowercase(), &l));
                prop_assert_eq!(&once, &match_lexicon(&text.to_uppercase(), &l));
                // matched phrases match themselves when re-scanned
                let rejoined = once.iter().map(|m| m.phrase.clone()).collect::<Vec<_>>().join(" . ");
                let again = match_lexicon(&rejoined, &l);
                prop_assert_eq!(once, again);
            }

            #[test]
            fn rendered_prefix_respects_budget(text in arb_text(), l in arb_lexicon(), budget in 0usize..20) {
                let (spec, rendered) = build_prefix(&match_lexicon(&text, &l), budget);
                prop_assert!(segment(&rendered).len() <= budget);
                prop_assert_eq!(spec.render(), rendered);
            }
        }
    }
}

//! Word segmentation shared by lexicon matching and the hashing tokenizer.

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c,
            '\u{2000}'..='\u{206F}'
            | '\u{3000}'..='\u{303F}'
            | '¡' | '¿' | '«' | '»' | '،' | '؛' | '؟'
            | '።' | '፣' | '፤' | '፥' | '፦' | '፧' | '፨')
}

/// Lowercases and splits on whitespace; each punctuation character becomes
/// its own token.
pub fn segment(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_whitespace() {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
        } else if is_punct(c) {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            out.push(c.to_string());
        } else {
            word.push(c);
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::segment;

    #[test]
    fn splits_words_and_punctuation() {
        assert_eq!(segment("Good day, BAD luck!"), ["good", "day", ",", "bad", "luck", "!"]);
        assert_eq!(segment("positive: a | negative: b").len(), 7);
        assert!(segment("  \t ").is_empty());
    }

    #[test]
    fn keeps_combining_marks_inside_words() {
        // Yoruba with a combining grave accent, and an Ethiopic word with its full stop
        assert_eq!(segment("Ọ̀rẹ́ mi"), ["ọ̀rẹ́", "mi"]);
        assert_eq!(segment("ሰላም።"), ["ሰላም", "።"]);
    }
}

//! Text normalization shared by every stage.

use unicode_normalization::UnicodeNormalization;

/// Unicode NFC, whitespace runs collapsed to one space, trimmed.
pub fn normalize(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    let mut out = String::with_capacity(nfc.len());
    for word in nfc.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Lowercase word tokens used for lexicon matching.
///
/// A token is a maximal run of alphanumerics, `-` and `'`. Everything else
/// separates tokens.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '\''))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

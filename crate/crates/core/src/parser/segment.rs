/// Lowercased tokens that end in `.` without ending a sentence.
const ABBREVIATIONS: &[&str] = &[
    "dr.", "mr.", "mrs.", "ms.", "a.m.", "p.m.", "e.g.", "i.e.", "vs.", "approx.", "fig.", "st.", "cf.",
];

fn is_list_marker(word: &str) -> bool {
    let body = &word[..word.len() - 1];
    !body.is_empty() && body.chars().all(|c| c.is_ascii_digit())
}

fn ends_sentence(word: &str) -> bool {
    let trimmed = word.trim_end_matches([')', '"', '\'', ']']);
    let Some(last) = trimmed.chars().last() else {
        return false;
    };
    if !matches!(last, '.' | '!' | '?') {
        return false;
    }
    if last == '.' {
        let lower = trimmed.to_lowercase();
        if ABBREVIATIONS.contains(&lower.as_str()) || is_list_marker(trimmed) {
            return false;
        }
    }
    true
}

/// Splits normalized text into sentences.
///
/// A sentence ends at a word ending in `.`, `!` or `?` (closing brackets and
/// quotes allowed after it), unless the word is a guarded abbreviation or a
/// numbered-list marker such as `2.`. Trailing text without a terminator is
/// its own sentence. Joining the result with single spaces gives back the
/// input.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for word in text.split(' ').filter(|w| !w.is_empty()) {
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(word);
        if ends_sentence(word) {
            out.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

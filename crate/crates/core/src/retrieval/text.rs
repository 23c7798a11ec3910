//! Small text utilities shared by retrieval and the scripted backend.

const ABBREVIATIONS: &[&str] = &["e.g.", "i.e.", "fig.", "etc.", "vs.", "approx.", "eq.", "ref."];

/// Split on `.`, `?` or `!` followed by whitespace and an uppercase letter.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if matches!(c, '.' | '?' | '!') {
            let mut j = i + 1;
            while j < chars.len() && chars[j].is_whitespace() {
                j += 1;
            }
            let boundary = j > i + 1 && j < chars.len() && chars[j].is_uppercase();
            if boundary && !(c == '.' && ends_with_abbreviation(&chars[start..=i])) {
                push_trimmed(&mut out, &chars[start..=i]);
                start = j;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    push_trimmed(&mut out, &chars[start.min(chars.len())..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, chars: &[char]) {
    let s: String = chars.iter().collect();
    let s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    if !s.is_empty() {
        out.push(s);
    }
}

fn ends_with_abbreviation(chars: &[char]) -> bool {
    let tail: String = chars.iter().rev().take(8).collect::<Vec<_>>().into_iter().rev().collect();
    let tail = tail.to_lowercase();
    ABBREVIATIONS.iter().any(|a| {
        tail.ends_with(a) && {
            // the abbreviation must start a word
            let before = tail.len() - a.len();
            before == 0 || !tail[..before].chars().last().is_some_and(char::is_alphanumeric)
        }
    })
}

/// Lowercased alphanumeric tokens; `-` and `_` are kept inside words.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '_'))
        .map(|t| t.trim_matches(|c| c == '-' || c == '_').to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// At most `max` characters, cut on a char boundary.
pub fn truncate_chars(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((idx, _)) => s[..idx].to_string(),
        None => s.to_string(),
    }
}

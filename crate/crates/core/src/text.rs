//! Text normalization shared by dedup, similarity search, metrics and keyword extraction.

use sha2::{Digest, Sha256};

/// Identity key for dedup: trimmed, internal whitespace collapsed, case-folded.
/// Never used to rewrite stored text.
pub fn dedup_key(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{2013}' | '\u{2014}' | '\u{2026}'
                | '\u{00AB}' | '\u{00BB}' | '\u{00BF}' | '\u{00A1}'
        )
}

/// Case-folded word tokens: split on Unicode whitespace, then strip leading and
/// trailing punctuation from each token. Tokens that are pure punctuation vanish.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|raw| raw.trim_matches(is_punct).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Hex SHA-256 of a prompt; used as provenance for generated text.
pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()).as_slice())
}

/// Strips trailing sentence punctuation so a sentence can be embedded as a clause
/// (`When {situation}, I think ...`).
pub fn as_clause(text: &str) -> &str {
    text.trim()
        .trim_end_matches(['.', '!', '?', ' '])
        .trim_end()
}

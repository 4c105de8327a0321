use std::path::Path;

use super::font::CHARSET;
use crate::error::{Error, Result};

const DEFAULT_WORDS: &str = include_str!("../../data/words.txt");

/// Deduplicated label vocabulary in file order. Lines starting with `#` are
/// comments; words with symbols outside the glyph set are dropped.
pub fn parse_words(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for line in text.lines() {
        let w = line.trim().to_lowercase();
        if w.is_empty() || w.starts_with('#') || w.contains(' ') {
            continue;
        }
        if w.chars().all(|c| CHARSET.contains(c)) && !out.contains(&w) {
            out.push(w);
        }
    }
    out
}

pub fn default_words() -> Vec<String> {
    parse_words(DEFAULT_WORDS)
}

pub fn load_words(path: Option<&Path>) -> Result<Vec<String>> {
    let words = match path {
        None => default_words(),
        Some(p) => parse_words(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
    };
    if words.len() < 10 {
        return Err(Error::config("words_path", "vocabulary needs at least 10 usable words"));
    }
    Ok(words)
}

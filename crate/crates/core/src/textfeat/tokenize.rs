use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// ASCII punctuation plus the common full-width CJK marks.
pub const DEFAULT_PUNCTUATION: &str =
    "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~，。；！？、：“”‘’（）《》【】…—";

/// Token limit of the transformer encoders whose vectors we consume.
pub const MAX_ENCODER_TOKENS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenMode {
    #[default]
    Word,
    /// One token per character; the fallback for unsegmented CJK text.
    Char,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    pub mode: TokenMode,
    pub lowercase: bool,
    pub punctuation: BTreeSet<char>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self::new(TokenMode::Word)
    }
}

impl Tokenizer {
    pub fn new(mode: TokenMode) -> Self {
        Self { mode, lowercase: true, punctuation: DEFAULT_PUNCTUATION.chars().collect() }
    }

    pub fn is_delimiter(&self, c: char) -> bool {
        c.is_whitespace() || self.punctuation.contains(&c)
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let norm = |s: &str| if self.lowercase { s.to_lowercase() } else { s.to_string() };
        match self.mode {
            TokenMode::Word => text
                .split(|c| self.is_delimiter(c))
                .filter(|t| !t.is_empty())
                .map(norm)
                .collect(),
            TokenMode::Char => text
                .chars()
                .filter(|&c| !self.is_delimiter(c))
                .map(|c| norm(c.encode_utf8(&mut [0; 4])))
                .collect(),
        }
    }
}

/// Keeps the first `max` tokens and reports whether anything was cut.
pub fn truncate_tokens(mut tokens: Vec<String>, max: usize) -> (Vec<String>, bool) {
    let truncated = tokens.len() > max;
    tokens.truncate(max);
    (tokens, truncated)
}

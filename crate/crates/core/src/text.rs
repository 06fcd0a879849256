//! Sentences and text normalization.
//!
//! Corpora are stored pre-tokenized: a sentence's tokens are exactly the
//! whitespace split of its normalized text. Normalization is Unicode NFC plus
//! collapsing whitespace runs to a single space; lowercasing is opt-in.

use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

pub fn normalize(text: &str, lowercase: bool) -> String {
    let nfc: String = text.nfc().collect();
    let joined = nfc.split_whitespace().collect::<Vec<_>>().join(" ");
    if lowercase {
        joined.to_lowercase()
    } else {
        joined
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct Sentence {
    raw: String,
    tokens: Vec<String>,
}

impl Sentence {
    pub fn new(text: &str) -> Self {
        Self::normalized(text, false)
    }

    pub fn normalized(text: &str, lowercase: bool) -> Self {
        let raw = normalize(text, lowercase);
        let tokens = raw.split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect();
        Sentence { raw, tokens }
    }

    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let joined = tokens
            .into_iter()
            .map(|t| t.as_ref().to_owned())
            .collect::<Vec<_>>()
            .join(" ");
        Self::new(&joined)
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl From<String> for Sentence {
    fn from(text: String) -> Self {
        Sentence::new(&text)
    }
}

impl From<&str> for Sentence {
    fn from(text: &str) -> Self {
        Sentence::new(text)
    }
}

impl From<Sentence> for String {
    fn from(s: Sentence) -> Self {
        s.raw
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

/// Mean of `values` that does not depend on their order: values are sorted
/// before summation so any permutation of the inputs gives identical bits.
pub fn order_free_mean(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    values.iter().sum::<f64>() / n
}

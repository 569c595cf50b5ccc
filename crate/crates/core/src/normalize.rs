//! Text canonicalization applied before any comparison of properties or values.

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// Canonical composition, whitespace collapse and trim; lowercasing is opt-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationPolicy {
    pub case_sensitive: bool,
}

impl Default for NormalizationPolicy {
    fn default() -> Self {
        Self { case_sensitive: true }
    }
}

impl NormalizationPolicy {
    pub fn case_insensitive() -> Self {
        Self { case_sensitive: false }
    }

    pub fn apply(&self, text: &str) -> String {
        let composed: String = text.nfc().collect();
        let mut out = String::with_capacity(composed.len());
        for word in composed.split_whitespace() {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(word);
        }
        if self.case_sensitive {
            out
        } else {
            out.to_lowercase()
        }
    }
}

/// Number of maximal non-whitespace runs.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Alphanumeric words of `text`, punctuation dropped. Used for
/// word-boundary-respecting containment checks.
pub fn alnum_words(text: &str) -> Vec<&str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect()
}

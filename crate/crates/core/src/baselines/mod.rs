//! Token-based baselines: a bag-of-tokens perceptron and ONDUX-style matching.

pub mod mlp;
pub mod ondux;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub use mlp::{mlp_predict, mlp_train, MlpConfig, MlpModel};
pub use ondux::{normalize_numeric, ondux_fit, ondux_predict, ondux_score_numeric, ondux_score_textual, AttributeKind, OnduxModel};

/// Maximal runs of alphanumeric characters, lowercased. Whitespace,
/// punctuation and symbols all act as separators.
pub fn tokenize(value: &str) -> Vec<String> {
    value
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Dense index over the tokens seen in training values, in sorted order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct TokenVocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TokenVocabulary {
    pub fn build<'a>(values: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<String> = values.into_iter().flat_map(tokenize).collect();
        Self::from_tokens(set.into_iter().collect())
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Sorted, deduplicated indices of the known tokens in `value`.
    pub fn features(&self, value: &str) -> Vec<usize> {
        let set: BTreeSet<usize> = tokenize(value).iter().filter_map(|t| self.index_of(t)).collect();
        set.into_iter().collect()
    }
}

impl From<Vec<String>> for TokenVocabulary {
    fn from(tokens: Vec<String>) -> Self {
        Self::from_tokens(tokens)
    }
}

impl From<TokenVocabulary> for Vec<String> {
    fn from(v: TokenVocabulary) -> Self {
        v.tokens
    }
}

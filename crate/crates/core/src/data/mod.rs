//! Attribute-value records, the domain catalog, character vocabulary and
//! leave-one-source-out splitting.

mod ingest;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ingest::{ingest, ingest_str, write_delimited, write_lines, InputFormat};

/// One `(source, attribute, value)` observation. The value is kept exactly as read.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributeRecord {
    pub source: String,
    pub attribute: String,
    pub value: String,
}

impl AttributeRecord {
    pub fn new(source: impl Into<String>, attribute: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            attribute: attribute.into(),
            value: value.into(),
        }
    }
}

/// Labelled training corpus grouped by attribute.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainCatalog {
    by_attribute: BTreeMap<String, Vec<AttributeRecord>>,
    sources: BTreeSet<String>,
}

impl DomainCatalog {
    pub fn from_records(records: impl IntoIterator<Item = AttributeRecord>) -> Result<Self> {
        let mut by_attribute: BTreeMap<String, Vec<AttributeRecord>> = BTreeMap::new();
        let mut sources = BTreeSet::new();
        for r in records {
            if r.attribute.is_empty() {
                return Err(Error::arg(format!(
                    "record from source {:?} has an empty attribute label",
                    r.source
                )));
            }
            sources.insert(r.source.clone());
            by_attribute.entry(r.attribute.clone()).or_default().push(r);
        }
        if by_attribute.is_empty() {
            return Err(Error::arg("domain catalog needs at least one record"));
        }
        Ok(Self {
            by_attribute,
            sources,
        })
    }

    /// Attribute labels in sorted order; position is the class index.
    pub fn labels(&self) -> Vec<String> {
        self.by_attribute.keys().cloned().collect()
    }

    pub fn num_classes(&self) -> usize {
        self.by_attribute.len()
    }

    pub fn sources(&self) -> &BTreeSet<String> {
        &self.sources
    }

    pub fn records_for(&self, attribute: &str) -> &[AttributeRecord] {
        self.by_attribute.get(attribute).map_or(&[], |v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.by_attribute.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All records paired with their class index, in label order then input order.
    pub fn labelled(&self) -> Vec<(&AttributeRecord, usize)> {
        self.by_attribute
            .values()
            .enumerate()
            .flat_map(|(class, recs)| recs.iter().map(move |r| (r, class)))
            .collect()
    }

    pub fn records(&self) -> impl Iterator<Item = &AttributeRecord> {
        self.by_attribute.values().flatten()
    }
}

/// Splits records into the catalog of all other sources and the held-out test source.
pub fn split_by_source(
    records: &[AttributeRecord],
    test_source: &str,
) -> Result<(DomainCatalog, Vec<AttributeRecord>)> {
    if !records.iter().any(|r| r.source == test_source) {
        return Err(Error::arg(format!("unknown test source {test_source:?}")));
    }
    let (test, train): (Vec<_>, Vec<_>) = records
        .iter()
        .cloned()
        .partition(|r| r.source == test_source);
    if train.is_empty() {
        return Err(Error::arg(format!(
            "no training sources remain after holding out {test_source:?}"
        )));
    }
    Ok((DomainCatalog::from_records(train)?, test))
}

/// Distinct sources in sorted order.
pub fn sources_of(records: &[AttributeRecord]) -> Vec<String> {
    records
        .iter()
        .map(|r| r.source.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const UNK: usize = 2;
const FIRST_CHAR: usize = 3;

/// Character dictionary. Indices 0, 1, 2 are the begin, end and unknown
/// markers; characters follow in code point order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharVocabulary {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl CharVocabulary {
    pub fn build<'a>(values: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<char> = values.into_iter().flat_map(str::chars).collect();
        Self::from_chars(set.into_iter().collect())
    }

    pub fn from_catalog(catalog: &DomainCatalog) -> Self {
        Self::build(catalog.records().map(|r| r.value.as_str()))
    }

    /// Rebuilds from a stored character list, which must be strictly increasing.
    pub fn from_chars(chars: Vec<char>) -> Self {
        let index = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i + FIRST_CHAR))
            .collect();
        Self { chars, index }
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// |D| including the three markers.
    pub fn size(&self) -> usize {
        self.chars.len() + FIRST_CHAR
    }

    pub fn index_of(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(UNK)
    }

    /// `[BOS] + per-code-point indices + [EOS]`.
    pub fn encode(&self, value: &str) -> Vec<usize> {
        let mut out = Vec::with_capacity(value.len() + 2);
        out.push(BOS);
        out.extend(value.chars().map(|c| self.index_of(c)));
        out.push(EOS);
        out
    }

    /// Inverse of [`encode`](Self::encode); `None` if any marker other than
    /// the outer BOS/EOS pair appears.
    pub fn decode(&self, indices: &[usize]) -> Option<String> {
        let inner = indices.strip_prefix(&[BOS])?.strip_suffix(&[EOS])?;
        inner
            .iter()
            .map(|&i| i.checked_sub(FIRST_CHAR).and_then(|j| self.chars.get(j).copied()))
            .collect()
    }
}

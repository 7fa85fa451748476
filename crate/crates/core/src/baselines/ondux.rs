//! ONDUX-style matching: a probabilistic tf-idf score for textual attributes
//! and a Gaussian kernel for numeric ones.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::tokenize;
use crate::data::DomainCatalog;
use crate::error::{Error, Result};

/// Fraction of an attribute's values that must normalise to a number for the
/// attribute to be treated as numeric.
pub const NUMERIC_THRESHOLD: f64 = 0.9;

/// Numeric reading of a value: it must contain a digit and no letters; every
/// other character except `.` is removed. A value left with several dots
/// (dotted phone numbers) loses the dots too.
pub fn normalize_numeric(value: &str) -> Option<f64> {
    if !value.chars().any(|c| c.is_ascii_digit()) || value.chars().any(char::is_alphabetic) {
        return None;
    }
    let mut kept: String = value.chars().filter(|c| c.is_ascii_digit() || *c == '.').collect();
    if kept.matches('.').count() > 1 {
        kept.retain(|c| c != '.');
    }
    kept.parse().ok()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AttributeKind {
    Numeric { mean: f64, std: f64 },
    Textual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnduxModel {
    /// Attributes in name order with their kind.
    pub attributes: Vec<(String, AttributeKind)>,
    /// Token counts per textual attribute, keyed by attribute position.
    pub token_counts: BTreeMap<String, BTreeMap<usize, usize>>,
    pub max_idf: f64,
}

fn sample_std(xs: &[f64], mean: f64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

pub fn ondux_fit(catalog: &DomainCatalog) -> OnduxModel {
    let mut attributes = Vec::new();
    let mut token_counts: BTreeMap<String, BTreeMap<usize, usize>> = BTreeMap::new();
    for (a, label) in catalog.labels().into_iter().enumerate() {
        let records = catalog.records_for(&label);
        let numbers: Vec<f64> = records.iter().filter_map(|r| normalize_numeric(&r.value)).collect();
        if !records.is_empty() && numbers.len() as f64 >= NUMERIC_THRESHOLD * records.len() as f64 {
            let mean = numbers.iter().sum::<f64>() / numbers.len() as f64;
            let mut std = sample_std(&numbers, mean);
            if std == 0.0 {
                std = f64::EPSILON.max(1e-6 * mean.abs().max(1.0));
            }
            attributes.push((label, AttributeKind::Numeric { mean, std }));
        } else {
            for r in records {
                for t in tokenize(&r.value) {
                    *token_counts.entry(t).or_default().entry(a).or_default() += 1;
                }
            }
            attributes.push((label, AttributeKind::Textual));
        }
    }
    let mut model = OnduxModel {
        attributes,
        token_counts,
        max_idf: 0.0,
    };
    model.max_idf = model
        .token_counts
        .keys()
        .map(|t| model.idf(t))
        .fold(0.0, f64::max);
    model
}

impl OnduxModel {
    fn position(&self, attribute: &str) -> Option<usize> {
        self.attributes.iter().position(|(n, _)| n == attribute)
    }

    pub fn kind(&self, attribute: &str) -> Option<&AttributeKind> {
        self.position(attribute).map(|i| &self.attributes[i].1)
    }

    fn textual_count(&self) -> usize {
        self.attributes
            .iter()
            .filter(|(_, k)| *k == AttributeKind::Textual)
            .count()
    }

    /// `ln(1 + |A| / df(t))` over textual attributes; 0 for unseen tokens.
    pub fn idf(&self, token: &str) -> f64 {
        match self.token_counts.get(token) {
            Some(per_attr) if !per_attr.is_empty() => {
                (1.0 + self.textual_count() as f64 / per_attr.len() as f64).ln()
            }
            _ => 0.0,
        }
    }
}

/// Gaussian kernel `exp(-(x - mu)^2 / (2 sigma^2))`.
pub fn ondux_score_numeric(model: &OnduxModel, attribute: &str, x: f64) -> Result<f64> {
    match model.kind(attribute) {
        Some(AttributeKind::Numeric { mean, std }) => {
            let z = (x - mean) / std;
            Ok((-0.5 * z * z).exp())
        }
        Some(AttributeKind::Textual) => Err(Error::Usage(format!("attribute {attribute:?} is not numeric"))),
        None => Err(Error::Usage(format!("unknown attribute {attribute:?}"))),
    }
}

/// Mean over the value's tokens of `P(a | t) * idf(t) / max_idf`.
pub fn ondux_score_textual(model: &OnduxModel, attribute: &str, value: &str) -> f64 {
    let Some(a) = model.position(attribute) else {
        return 0.0;
    };
    let tokens = tokenize(value);
    if tokens.is_empty() || model.max_idf <= 0.0 {
        return 0.0;
    }
    let total: f64 = tokens
        .iter()
        .map(|t| match model.token_counts.get(t) {
            Some(per_attr) => {
                let all: usize = per_attr.values().sum();
                let here = per_attr.get(&a).copied().unwrap_or(0);
                (here as f64 / all as f64) * model.idf(t) / model.max_idf
            }
            None => 0.0,
        })
        .sum();
    total / tokens.len() as f64
}

/// Best-scoring attribute. Numeric-looking values are matched against numeric
/// attributes, everything else against textual ones; ties go to the name that
/// sorts first.
pub fn ondux_predict<'m>(model: &'m OnduxModel, value: &str) -> Result<&'m str> {
    let number = normalize_numeric(value);
    let numeric: BTreeSet<usize> = model
        .attributes
        .iter()
        .enumerate()
        .filter(|(_, (_, k))| matches!(k, AttributeKind::Numeric { .. }))
        .map(|(i, _)| i)
        .collect();
    let use_numeric = match number {
        Some(_) => !numeric.is_empty(),
        None => numeric.len() == model.attributes.len(),
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, (name, _)) in model.attributes.iter().enumerate() {
        if numeric.contains(&i) != use_numeric {
            continue;
        }
        let score = if use_numeric {
            number.map_or(Ok(0.0), |x| ondux_score_numeric(model, name, x))?
        } else {
            ondux_score_textual(model, name, value)
        };
        if best.map_or(true, |(_, s)| score > s) {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| model.attributes[i].0.as_str())
        .ok_or_else(|| Error::Usage("model has no attributes".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AttributeRecord;
    use proptest::prelude::*;

    fn catalog(rows: &[(&str, &str)]) -> DomainCatalog {
        DomainCatalog::from_records(rows.iter().map(|&(a, v)| AttributeRecord::new("s", a, v))).unwrap()
    }

    #[test]
    fn normalisation() {
        assert_eq!(normalize_numeric("555-0100"), Some(5550100.0));
        assert_eq!(normalize_numeric("$12,345.50"), Some(12345.5));
        assert_eq!(normalize_numeric("555.867.5309"), Some(5558675309.0));
        assert_eq!(normalize_numeric("3:05 pm EDT"), None);
        assert_eq!(normalize_numeric("black"), None);
        assert_eq!(normalize_numeric("--"), None);
    }

    #[test]
    fn numeric_stats_use_sample_std() {
        let m = ondux_fit(&catalog(&[("n", "10"), ("n", "20"), ("n", "30"), ("c", "black"), ("c", "white")]));
        assert_eq!(m.kind("n"), Some(&AttributeKind::Numeric { mean: 20.0, std: 10.0 }));
        assert_eq!(m.kind("c"), Some(&AttributeKind::Textual));
    }

    #[test]
    fn kernel_values() {
        let m = ondux_fit(&catalog(&[("n", "10"), ("n", "20"), ("n", "30"), ("c", "x")]));
        assert_eq!(ondux_score_numeric(&m, "n", 20.0).unwrap(), 1.0);
        assert!((ondux_score_numeric(&m, "n", 30.0).unwrap() - 0.6065306597126334).abs() < 1e-12);
        assert!((ondux_score_numeric(&m, "n", 10.0).unwrap() - 0.6065306597126334).abs() < 1e-12);
        assert_eq!(ondux_score_numeric(&m, "n", f64::INFINITY).unwrap(), 0.0);
        assert_eq!(ondux_score_numeric(&m, "n", f64::NEG_INFINITY).unwrap(), 0.0);
        assert!(matches!(ondux_score_numeric(&m, "c", 1.0), Err(Error::Usage(_))));
    }

    #[test]
    fn constant_column_keeps_kernel_defined() {
        let m = ondux_fit(&catalog(&[("n", "5"), ("n", "5"), ("c", "x")]));
        assert_eq!(ondux_score_numeric(&m, "n", 5.0).unwrap(), 1.0);
        assert!(ondux_score_numeric(&m, "n", 6.0).unwrap() < 1e-6);
    }

    #[test]
    fn textual_score_hand_computed() {
        let m = ondux_fit(&catalog(&[
            ("color", "black"),
            ("color", "white"),
            ("color", "black"),
            ("interior", "black leather"),
            ("interior", "tan leather"),
        ]));
        let c = ondux_score_textual(&m, "color", "black leather");
        let i = ondux_score_textual(&m, "interior", "black leather");
        assert!((c - 0.21030991785715245).abs() < 1e-12, "{c}");
        assert!((i - 0.6051549589285762).abs() < 1e-12, "{i}");
        assert_eq!(ondux_score_textual(&m, "color", "purple"), 0.0);
        assert_eq!(ondux_score_textual(&m, "color", ""), 0.0);
        assert_eq!(ondux_score_textual(&m, "interior", "tan"), 1.0);
        assert_eq!(ondux_predict(&m, "black leather").unwrap(), "interior");
    }

    #[test]
    fn prediction_routes_by_kind_and_breaks_ties_by_name() {
        let m = ondux_fit(&catalog(&[
            ("b", "10"),
            ("b", "20"),
            ("a", "30"),
            ("a", "40"),
            ("c", "black"),
        ]));
        assert_eq!(ondux_predict(&m, "black").unwrap(), "c");
        assert_eq!(ondux_predict(&m, "$12").unwrap(), "b");
        // equidistant between the two means with equal spread
        assert_eq!(ondux_predict(&m, "25").unwrap(), "a");
        assert_eq!(ondux_predict(&m, "unknown words").unwrap(), "c");
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric(delta in 0.0f64..100.0) {
            let m = ondux_fit(&catalog(&[("n", "10"), ("n", "20"), ("n", "30"), ("c", "x")]));
            let up = ondux_score_numeric(&m, "n", 20.0 + delta).unwrap();
            let down = ondux_score_numeric(&m, "n", 20.0 - delta).unwrap();
            prop_assert!((up - down).abs() <= 1e-12);
        }

        #[test]
        fn prediction_is_a_catalog_attribute(value in "\\PC{0,12}") {
            let m = ondux_fit(&catalog(&[("n", "1"), ("n", "3"), ("c", "red"), ("d", "blue sky")]));
            let p = ondux_predict(&m, &value).unwrap();
            prop_assert!(["c", "d", "n"].contains(&p));
        }
    }
}

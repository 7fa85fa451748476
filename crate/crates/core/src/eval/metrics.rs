use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts of (true attribute, predicted attribute) pairs. Rows and columns
/// share one sorted label list, which may include attributes that only occur
/// as true labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTally {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionTally {
    pub fn new<S: AsRef<str>>(labels: impl IntoIterator<Item = S>) -> Self {
        let labels: Vec<String> = labels
            .into_iter()
            .map(|s| s.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let n = labels.len();
        Self {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    fn index(&self, label: &str) -> Result<usize> {
        self.labels
            .binary_search_by(|l| l.as_str().cmp(label))
            .map_err(|_| Error::arg(format!("label {label:?} is not part of the tally")))
    }

    pub fn add(&mut self, truth: &str, predicted: &str) -> Result<()> {
        self.add_count(truth, predicted, 1)
    }

    pub fn add_count(&mut self, truth: &str, predicted: &str, n: u64) -> Result<()> {
        let (t, p) = (self.index(truth)?, self.index(predicted)?);
        self.counts[t][p] += n;
        Ok(())
    }

    pub fn count(&self, truth: &str, predicted: &str) -> u64 {
        match (self.index(truth), self.index(predicted)) {
            (Ok(t), Ok(p)) => self.counts[t][p],
            _ => 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Sum of tallies over the union of their labels.
    pub fn merged<'a>(tallies: impl IntoIterator<Item = &'a ConfusionTally> + Clone) -> Self {
        let labels: BTreeSet<&str> = tallies
            .clone()
            .into_iter()
            .flat_map(|t| t.labels.iter().map(String::as_str))
            .collect();
        let mut out = Self::new(labels);
        for t in tallies {
            for (i, row) in t.counts.iter().enumerate() {
                for (j, &c) in row.iter().enumerate() {
                    if c > 0 {
                        out.add_count(&t.labels[i], &t.labels[j], c).expect("label in union");
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeMetrics {
    pub attribute: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of records whose true label is this attribute.
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_attribute: Vec<AttributeMetrics>,
    pub accuracy: f64,
    /// Unweighted mean of the per-attribute F1 values.
    pub macro_f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Precision, recall and F1 per attribute (zero denominators give 0) plus
/// accuracy as trace over total.
pub fn metrics(tally: &ConfusionTally) -> Metrics {
    let n = tally.labels.len();
    let per_attribute: Vec<AttributeMetrics> = (0..n)
        .map(|i| {
            let tp = tally.counts[i][i];
            let predicted: u64 = (0..n).map(|r| tally.counts[r][i]).sum();
            let actual: u64 = tally.counts[i].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, actual);
            AttributeMetrics {
                attribute: tally.labels[i].clone(),
                precision,
                recall,
                f1: f_measure(precision, recall),
                support: actual,
            }
        })
        .collect();
    let macro_f1 = if n == 0 {
        0.0
    } else {
        per_attribute.iter().map(|m| m.f1).sum::<f64>() / n as f64
    };
    Metrics {
        per_attribute,
        accuracy: ratio(tally.trace(), tally.total()),
        macro_f1,
    }
}

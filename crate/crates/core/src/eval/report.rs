use std::fmt::Write as _;

use serde::Serialize;

use super::loo::{EvalReport, GridPoint};
use super::metrics::AttributeMetrics;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RenderedReport {
    pub text: String,
    /// One JSON object per (method, held-out source).
    pub jsonl: String,
}

#[derive(Serialize)]
struct RunLine<'a> {
    method: String,
    test_source: &'a str,
    config: Option<GridPoint>,
    validation_accuracy: Option<f64>,
    accuracy: f64,
    macro_f1: f64,
    per_attribute: &'a [AttributeMetrics],
}

fn bracket(p: Option<GridPoint>) -> String {
    p.map(|p| p.to_string()).unwrap_or_default()
}

/// Summary table (one row per method), per-run accuracies and pooled
/// per-attribute precision, recall and F-measure. Methods appear in their
/// declared order and attributes in name order.
pub fn render_report(reports: &[EvalReport]) -> Result<RenderedReport> {
    let mut sorted: Vec<&EvalReport> = reports.iter().collect();
    sorted.sort_by_key(|r| r.method.order());

    let mut text = String::new();
    let mut jsonl = String::new();
    writeln!(text, "{:<16} {:>9} {:>9}  config", "method", "accuracy", "macro-f1").unwrap();
    for r in &sorted {
        writeln!(
            text,
            "{:<16} {:>9.4} {:>9.4}  {}",
            r.method.name(),
            r.mean_accuracy,
            r.pooled.macro_f1,
            bracket(r.typical_config())
        )
        .unwrap();
    }

    for r in &sorted {
        writeln!(text, "\n== {} ==", r.method.name()).unwrap();
        writeln!(text, "{:<16} {:>9}  config", "test source", "accuracy").unwrap();
        for run in &r.runs {
            writeln!(
                text,
                "{:<16} {:>9.4}  {}",
                run.test_source,
                run.accuracy,
                bracket(run.config)
            )
            .unwrap();
            let line = RunLine {
                method: r.method.name(),
                test_source: &run.test_source,
                config: run.config,
                validation_accuracy: run.validation_accuracy,
                accuracy: run.accuracy,
                macro_f1: run.metrics.macro_f1,
                per_attribute: &run.metrics.per_attribute,
            };
            jsonl.push_str(&serde_json::to_string(&line)?);
            jsonl.push('\n');
        }
        writeln!(text, "{:<16} {:>9.4}", "mean", r.mean_accuracy).unwrap();
        writeln!(
            text,
            "\n{:<16} {:>9} {:>9} {:>9} {:>8}",
            "attribute", "precision", "recall", "f-measure", "support"
        )
        .unwrap();
        for a in &r.pooled.per_attribute {
            writeln!(
                text,
                "{:<16} {:>9.3} {:>9.3} {:>9.3} {:>8}",
                a.attribute, a.precision, a.recall, a.f1, a.support
            )
            .unwrap();
        }
    }
    Ok(RenderedReport { text, jsonl })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::loo::{Method, RunResult};
    use crate::eval::metrics::{metrics, ConfusionTally};
    use crate::layers::PoolingOp;

    fn fixture() -> Vec<EvalReport> {
        let mut t = ConfusionTally::new(["location", "temperature", "wind"]);
        t.add_count("temperature", "temperature", 8).unwrap();
        t.add_count("temperature", "wind", 2).unwrap();
        t.add_count("wind", "wind", 5).unwrap();
        t.add_count("location", "wind", 3).unwrap();
        let run = RunResult {
            test_source: "s1".into(),
            config: Some(GridPoint {
                window: 3,
                embedding_size: 100,
            }),
            validation_accuracy: Some(0.9),
            accuracy: metrics(&t).accuracy,
            metrics: metrics(&t),
            tally: t,
        };
        vec![
            EvalReport::from_runs(Method::Ondux, vec![RunResult { config: None, ..run.clone() }]),
            EvalReport::from_runs(Method::Hybrid(PoolingOp::Max), vec![run]),
        ]
    }

    #[test]
    fn table_layout_and_values() {
        let out = render_report(&fixture()).unwrap();
        let lines: Vec<&str> = out.text.lines().collect();
        assert!(lines[1].starts_with("hybrid-max"), "{}", out.text);
        assert!(lines[1].ends_with("[w=3,e=100]"));
        assert!(lines[2].starts_with("ondux"));
        // temperature: P = 8/8, R = 8/10, F = 16/18
        assert!(out.text.contains("temperature          1.000     0.800     0.889       10"), "{}", out.text);
        assert!(out.text.contains("location             0.000     0.000     0.000        3"));
        // wind: P = 5/10, R = 5/5, F = 2/3
        assert!(out.text.contains("wind                 0.500     1.000     0.667        5"));
        assert_eq!(out.jsonl.lines().count(), 2);
        let first: serde_json::Value = serde_json::from_str(out.jsonl.lines().next().unwrap()).unwrap();
        assert_eq!(first["method"], "hybrid-max");
        assert_eq!(first["config"]["window"], 3);
    }

    #[test]
    fn deterministic_and_empty() {
        assert_eq!(render_report(&fixture()).unwrap(), render_report(&fixture()).unwrap());
        let empty = render_report(&[]).unwrap();
        assert_eq!(empty.text.lines().count(), 1);
        assert!(empty.jsonl.is_empty());
    }
}

//! Leave-one-source-out evaluation, confusion tallies and reports.

pub mod loo;
pub mod metrics;
pub mod report;

pub use loo::{fit, run_loo, run_one, EvalReport, FittedModel, Grid, GridPoint, LooConfig, Method, RunResult};
pub use metrics::{f_measure, metrics, AttributeMetrics, ConfusionTally, Metrics};
pub use report::{render_report, RenderedReport};

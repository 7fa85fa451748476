use std::fmt;
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics, ConfusionTally, Metrics};
use crate::baselines::{mlp_train, ondux_fit, ondux_predict, MlpConfig, MlpModel, OnduxModel};
use crate::data::{sources_of, split_by_source, AttributeRecord, DomainCatalog};
use crate::error::{Error, Result};
use crate::layers::{BranchMode, PoolingOp};
use crate::par::{map_indexed, Execution};
use crate::training::{train, TrainConfig, TrainedModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Hybrid(PoolingOp),
    Cnn,
    Lstm,
    Mlp,
    Ondux,
}

impl Method {
    /// Report order.
    pub const ALL: [Method; 10] = [
        Method::Hybrid(PoolingOp::Max),
        Method::Hybrid(PoolingOp::Sum),
        Method::Hybrid(PoolingOp::Avg),
        Method::Hybrid(PoolingOp::Mul),
        Method::Hybrid(PoolingOp::Outer),
        Method::Hybrid(PoolingOp::Concat),
        Method::Cnn,
        Method::Lstm,
        Method::Mlp,
        Method::Ondux,
    ];

    pub fn name(self) -> String {
        match self {
            Method::Hybrid(op) => format!("hybrid-{}", op.name()),
            Method::Cnn => "cnn".into(),
            Method::Lstm => "lstm".into(),
            Method::Mlp => "mlp".into(),
            Method::Ondux => "ondux".into(),
        }
    }

    pub fn order(self) -> usize {
        Self::ALL.iter().position(|&m| m == self).unwrap_or(usize::MAX)
    }

    pub fn is_network(self) -> bool {
        matches!(self, Method::Hybrid(_) | Method::Cnn | Method::Lstm)
    }

    /// Network configuration for this method on top of `base`.
    pub fn train_config(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        match self {
            Method::Hybrid(op) => {
                cfg.branch_mode = BranchMode::Hybrid;
                cfg.pooling = op;
            }
            Method::Cnn => cfg.branch_mode = BranchMode::CnnOnly,
            Method::Lstm => cfg.branch_mode = BranchMode::LstmOnly,
            Method::Mlp | Method::Ondux => {}
        }
        cfg
    }

    /// Comma-separated method list.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        s.split(',').map(|m| m.trim().parse()).collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if let Some(op) = lower.strip_prefix("hybrid-") {
            return Ok(Method::Hybrid(op.parse()?));
        }
        match lower.as_str() {
            "cnn" | "cnn-only" => Ok(Method::Cnn),
            "lstm" | "lstm-only" => Ok(Method::Lstm),
            "mlp" => Ok(Method::Mlp),
            "ondux" => Ok(Method::Ondux),
            _ => Err(Error::arg(format!(
                "unknown method {s:?} (expected one of {})",
                Method::ALL.map(Method::name).join(", ")
            ))),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Embedding sizes and windows searched per run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub embedding_sizes: Vec<usize>,
    pub windows: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            embedding_sizes: vec![100, 200, 300],
            windows: vec![3, 5],
        }
    }
}

impl Grid {
    pub fn single(embedding_size: usize, window: usize) -> Self {
        Self {
            embedding_sizes: vec![embedding_size],
            windows: vec![window],
        }
    }

    /// Points in search order: windows outer, embedding sizes inner. A
    /// method without a convolution only sees the first window.
    pub fn points(&self, method: Method) -> Vec<GridPoint> {
        let windows = if method == Method::Lstm {
            &self.windows[..self.windows.len().min(1)]
        } else {
            &self.windows[..]
        };
        windows
            .iter()
            .flat_map(|&window| {
                self.embedding_sizes.iter().map(move |&embedding_size| GridPoint {
                    window,
                    embedding_size,
                })
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridPoint {
    pub window: usize,
    pub embedding_size: usize,
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[w={},e={}]", self.window, self.embedding_size)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LooConfig {
    pub train: TrainConfig,
    pub grid: Grid,
    /// Hidden widths of the token perceptron.
    pub mlp_hidden: [usize; 2],
    /// Whether held-out sources run concurrently.
    pub execution: Execution,
}

impl Default for LooConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            grid: Grid::default(),
            mlp_hidden: [300, 50],
            execution: Execution::default(),
        }
    }
}

/// Any fitted model that maps a value to an attribute label.
#[derive(Clone, Debug)]
pub enum FittedModel {
    Network(TrainedModel),
    Mlp(MlpModel),
    Ondux(OnduxModel),
}

impl FittedModel {
    pub fn predict_label(&self, value: &str) -> Result<String> {
        Ok(match self {
            FittedModel::Network(m) => m.predict_label(value)?.to_string(),
            FittedModel::Mlp(m) => m.predict_label(value)?.to_string(),
            FittedModel::Ondux(m) => ondux_predict(m, value)?.to_string(),
        })
    }

    pub fn validation_accuracy(&self) -> Option<f64> {
        match self {
            FittedModel::Network(m) => Some(m.best_validation_accuracy),
            FittedModel::Mlp(m) => Some(m.best_validation_accuracy),
            FittedModel::Ondux(_) => None,
        }
    }
}

/// Fits `method` on `catalog`, searching `grid` for network methods and
/// keeping the point with the highest validation accuracy (first on ties).
pub fn fit(catalog: &DomainCatalog, method: Method, cfg: &LooConfig) -> Result<(FittedModel, Option<GridPoint>)> {
    match method {
        Method::Ondux => Ok((FittedModel::Ondux(ondux_fit(catalog)), None)),
        Method::Mlp => {
            let mlp = MlpConfig {
                hidden: cfg.mlp_hidden,
                ..MlpConfig::from_train(&cfg.train)
            };
            Ok((FittedModel::Mlp(mlp_train(catalog, &mlp)?), None))
        }
        _ => {
            let points = cfg.grid.points(method);
            if points.is_empty() {
                return Err(Error::arg("hyper-parameter grid is empty"));
            }
            let mut best: Option<(TrainedModel, GridPoint)> = None;
            for p in points {
                let mut tc = method.train_config(&cfg.train);
                tc.embedding_size = p.embedding_size;
                tc.window = p.window;
                let m = train(catalog, &tc)?;
                if best
                    .as_ref()
                    .map_or(true, |(b, _)| m.best_validation_accuracy > b.best_validation_accuracy)
                {
                    best = Some((m, p));
                }
            }
            let (m, p) = best.expect("non-empty grid");
            Ok((FittedModel::Network(m), Some(p)))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub test_source: String,
    pub config: Option<GridPoint>,
    pub validation_accuracy: Option<f64>,
    pub accuracy: f64,
    pub tally: ConfusionTally,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub runs: Vec<RunResult>,
    pub mean_accuracy: f64,
    /// Metrics of the tally summed over all runs.
    pub pooled: Metrics,
}

impl EvalReport {
    pub fn from_runs(method: Method, runs: Vec<RunResult>) -> Self {
        let mean_accuracy = if runs.is_empty() {
            0.0
        } else {
            runs.iter().map(|r| r.accuracy).sum::<f64>() / runs.len() as f64
        };
        let pooled = metrics(&ConfusionTally::merged(runs.iter().map(|r| &r.tally)));
        Self {
            method,
            runs,
            mean_accuracy,
            pooled,
        }
    }

    /// Most frequently chosen grid point, earliest run first on ties.
    pub fn typical_config(&self) -> Option<GridPoint> {
        let chosen: Vec<GridPoint> = self.runs.iter().filter_map(|r| r.config).collect();
        let mut best: Option<(GridPoint, usize)> = None;
        for &p in &chosen {
            let n = chosen.iter().filter(|&&q| q == p).count();
            if best.map_or(true, |(_, m)| n > m) {
                best = Some((p, n));
            }
        }
        best.map(|(p, _)| p)
    }
}

/// One held-out run: fit on every other source, score on `test_source`.
pub fn run_one(records: &[AttributeRecord], test_source: &str, method: Method, cfg: &LooConfig) -> Result<RunResult> {
    let (catalog, test) = split_by_source(records, test_source)?;
    let (model, config) = fit(&catalog, method, cfg)?;
    let labels = catalog
        .labels()
        .into_iter()
        .chain(test.iter().map(|r| r.attribute.clone()));
    let mut tally = ConfusionTally::new(labels);
    for r in &test {
        tally.add(&r.attribute, &model.predict_label(&r.value)?)?;
    }
    let m = metrics(&tally);
    info!("{method} held out {test_source}: accuracy {:.4}", m.accuracy);
    Ok(RunResult {
        test_source: test_source.to_string(),
        config,
        validation_accuracy: model.validation_accuracy(),
        accuracy: m.accuracy,
        tally,
        metrics: m,
    })
}

/// Leave-one-source-out evaluation of `method`: each source is held out once,
/// runs are reported in source name order.
pub fn run_loo(records: &[AttributeRecord], method: Method, cfg: &LooConfig) -> Result<EvalReport> {
    let sources = sources_of(records);
    if sources.len() < 2 {
        return Err(Error::arg(format!(
            "leave-one-source-out needs at least two sources, found {}",
            sources.len()
        )));
    }
    let runs = map_indexed(&sources, cfg.execution, |_, s| run_one(records, s, method, cfg))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_runs(method, runs))
}

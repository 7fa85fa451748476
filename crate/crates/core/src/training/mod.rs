//! Loss, optimiser and the minibatch training loop with validation-based
//! model selection.

mod adam;
pub mod gradcheck;

use std::collections::BTreeMap;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

pub use adam::{AdamParams, AdamState};

use crate::data::{CharVocabulary, DomainCatalog};
use crate::error::{Error, Result};
use crate::layers::{BranchMode, HybridNetwork, LstmOutput, Mode, NetworkConfig, PoolingOp};
use crate::numerics::{derive_seed, Array1, Rng, DEFAULT_INIT_SCALE};
use crate::par::{map_indexed, Execution};

/// Smallest probability fed to the log in [`nll_loss`].
pub const PROB_FLOOR: f64 = 1e-12;

/// Sub-seed streams derived from [`TrainConfig::seed`].
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const DROPOUT: u64 = 4;
}

/// `-ln probs[true_class]`, with the probability clamped at [`PROB_FLOOR`].
pub fn nll_loss(probs: &Array1, true_class: usize) -> f64 {
    let p = probs[true_class];
    if p < PROB_FLOOR {
        warn!("probability {p:e} for the true class clamped to {PROB_FLOOR:e}");
        return -PROB_FLOOR.ln();
    }
    -p.ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub drop_rate: f64,
    pub embedding_size: usize,
    pub window: usize,
    pub pooling: PoolingOp,
    pub branch_mode: BranchMode,
    pub seed: u64,
    pub validation_fraction: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Defaults to `embedding_size` when unset.
    pub conv_filters: Option<usize>,
    /// Defaults to `embedding_size` when unset.
    pub lstm_hidden: Option<usize>,
    /// Width of both branch hidden layers; defaults to `embedding_size`.
    pub branch_dim: Option<usize>,
    pub shared_embedding: bool,
    pub lstm_output: LstmOutput,
    pub init_scale: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-6,
            batch_size: 10,
            epochs: 20,
            drop_rate: 0.25,
            embedding_size: 100,
            window: 3,
            pooling: PoolingOp::Max,
            branch_mode: BranchMode::Hybrid,
            seed: 0,
            validation_fraction: 0.2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            conv_filters: None,
            lstm_hidden: None,
            branch_dim: None,
            shared_embedding: true,
            lstm_output: LstmOutput::Final,
            init_scale: DEFAULT_INIT_SCALE,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::arg(format!(
                "validation fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(Error::arg(format!("drop rate must lie in [0, 1), got {}", self.drop_rate)));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn network_config(&self, vocab_size: usize, num_classes: usize) -> NetworkConfig {
        let e = self.embedding_size;
        NetworkConfig {
            vocab_size,
            num_classes,
            embedding_size: e,
            window: self.window,
            conv_filters: self.conv_filters.unwrap_or(e),
            lstm_hidden: self.lstm_hidden.unwrap_or(e),
            branch_dim: self.branch_dim.unwrap_or(e),
            pooling: self.pooling,
            branch_mode: self.branch_mode,
            drop_rate: self.drop_rate,
            shared_embedding: self.shared_embedding,
            lstm_output: self.lstm_output,
            init_scale: self.init_scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_accuracy: f64,
}

/// `epoch,train_loss,validation_accuracy` lines with a header.
pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,validation_accuracy\n");
    for m in history {
        out.push_str(&format!("{},{},{}\n", m.epoch, m.train_loss, m.validation_accuracy));
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub network: HybridNetwork,
    pub vocab: CharVocabulary,
    pub labels: Vec<String>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_validation_accuracy: f64,
    pub config: TrainConfig,
    pub history: Vec<EpochMetrics>,
}

impl TrainedModel {
    pub fn probabilities(&self, value: &str) -> Result<Array1> {
        self.network.predict(&self.vocab.encode(value))
    }

    /// Predicted class index and its probability.
    pub fn predict(&self, value: &str) -> Result<(usize, f64)> {
        let p = self.probabilities(value)?;
        let k = p.argmax().ok_or_else(|| Error::Internal("empty probability vector".into()))?;
        Ok((k, p[k]))
    }

    pub fn predict_label(&self, value: &str) -> Result<&str> {
        Ok(&self.labels[self.predict(value)?.0])
    }

    /// Fraction of `(value, label)` pairs predicted correctly.
    pub fn accuracy<'a>(&self, examples: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<f64> {
        let (mut hits, mut total) = (0usize, 0usize);
        for (value, label) in examples {
            total += 1;
            if self.predict_label(value)? == label {
                hits += 1;
            }
        }
        Ok(if total == 0 { 0.0 } else { hits as f64 / total as f64 })
    }
}

/// Stratified split of example indices. The validation size is
/// `round(n * fraction)`, allotted to classes by largest remainder (ties to the
/// lower class index), and every class keeps at least one training example.
pub fn stratified_split(classes: &[usize], fraction: f64, rng: &mut Rng) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in classes.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let n = classes.len();
    let target = (n as f64 * fraction).round() as usize;

    let groups: Vec<Vec<usize>> = by_class.into_values().collect();
    let caps: Vec<usize> = groups.iter().map(|g| g.len().saturating_sub(1)).collect();
    let exact: Vec<f64> = groups.iter().map(|g| g.len() as f64 * fraction).collect();
    let mut quota: Vec<usize> = exact
        .iter()
        .zip(&caps)
        .map(|(e, &cap)| (e.floor() as usize).min(cap))
        .collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut assigned: usize = quota.iter().sum();
    while assigned < target {
        let before = assigned;
        for &k in &order {
            if assigned < target && quota[k] < caps[k] {
                quota[k] += 1;
                assigned += 1;
            }
        }
        if assigned == before {
            break;
        }
    }

    let mut train = Vec::with_capacity(n - assigned);
    let mut val = Vec::with_capacity(assigned);
    for (mut idx, take) in groups.into_iter().zip(quota) {
        rng.shuffle(&mut idx);
        val.extend_from_slice(&idx[..take]);
        train.extend_from_slice(&idx[take..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

struct Example {
    indices: Vec<usize>,
    class: usize,
}

/// Loss and summed gradient of a minibatch. Per-example work runs through
/// [`map_indexed`]; the reduction is always in batch order.
pub fn batch_gradient(
    net: &HybridNetwork,
    batch: &[(&[usize], usize)],
    dropout_seeds: &[u64],
    exec: Execution,
) -> Result<(f64, HybridNetwork)> {
    let per_example = map_indexed(batch, exec, |i, &(indices, class)| -> Result<(f64, HybridNetwork)> {
        let mut rng = Rng::new(dropout_seeds[i]);
        let (probs, cache) = net.forward(indices, Mode::Train, Some(&mut rng))?;
        let loss = nll_loss(&probs, class);
        Ok((loss, net.backward(&cache, class)?))
    });
    let mut total = net.zeros_like();
    let mut loss = 0.0;
    for r in per_example {
        let (l, g) = r?;
        loss += l;
        total.add_scaled(1.0, &g)?;
    }
    Ok((loss, total))
}

pub fn adam_step_network(
    net: &mut HybridNetwork,
    grad: &HybridNetwork,
    state: &mut AdamState,
    hp: &AdamParams,
) -> Result<()> {
    let grads: Vec<&[f64]> = grad.tensors().into_iter().map(|t| t.data).collect();
    let mut params: Vec<&mut [f64]> = net.tensors_mut().into_iter().map(|t| t.data).collect();
    state.step(hp, &mut params, &grads)
}

fn accuracy_of(net: &HybridNetwork, examples: &[&Example], exec: Execution) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let hits = map_indexed(examples, exec, |_, ex| -> Result<bool> {
        Ok(net.predict(&ex.indices)?.argmax() == Some(ex.class))
    });
    let mut n = 0usize;
    for h in hits {
        if h? {
            n += 1;
        }
    }
    Ok(n as f64 / examples.len() as f64)
}

/// Trains on `catalog` and returns the parameters of the epoch with the best
/// validation accuracy (earliest epoch on ties).
pub fn train(catalog: &DomainCatalog, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if catalog.num_classes() < 2 {
        return Err(Error::arg(format!(
            "training needs at least two attributes, catalog has {}",
            catalog.num_classes()
        )));
    }
    let vocab = CharVocabulary::from_catalog(catalog);
    let labels = catalog.labels();
    let examples: Vec<Example> = catalog
        .labelled()
        .into_iter()
        .map(|(r, class)| Example {
            indices: vocab.encode(&r.value),
            class,
        })
        .collect();
    let classes: Vec<usize> = examples.iter().map(|e| e.class).collect();
    let (train_idx, val_idx) = stratified_split(
        &classes,
        cfg.validation_fraction,
        &mut Rng::derived(cfg.seed, streams::SPLIT),
    );
    let val_set: Vec<&Example> = val_idx.iter().map(|&i| &examples[i]).collect();
    let train_set: Vec<&Example> = train_idx.iter().map(|&i| &examples[i]).collect();
    // With no held-out examples, selection falls back to training accuracy.
    let selection_set = if val_set.is_empty() { &train_set } else { &val_set };

    let net_cfg = cfg.network_config(vocab.size(), labels.len());
    let mut net = HybridNetwork::new(net_cfg, &mut Rng::derived(cfg.seed, streams::INIT))?;
    let hp = cfg.adam();
    let mut adam = AdamState::new(net.tensors().iter().map(|t| t.data.len()));
    let mut shuffle_rng = Rng::derived(cfg.seed, streams::SHUFFLE);
    let dropout_base = derive_seed(cfg.seed, streams::DROPOUT);

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(usize, f64, HybridNetwork)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step: u64 = 0;

    for epoch in 1..=cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[usize], usize)> = chunk
                .iter()
                .map(|&i| (train_set[i].indices.as_slice(), train_set[i].class))
                .collect();
            let seeds: Vec<u64> = (0..batch.len() as u64)
                .map(|j| derive_seed(dropout_base, (step << 16) | j))
                .collect();
            let (loss, grad) = batch_gradient(&net, &batch, &seeds, cfg.execution)?;
            adam_step_network(&mut net, &grad, &mut adam, &hp)?;
            epoch_loss += loss;
            step += 1;
        }
        let val_acc = accuracy_of(&net, selection_set, cfg.execution)?;
        debug!("epoch {epoch}: loss {epoch_loss:.4} validation accuracy {val_acc:.4}");
        history.push(EpochMetrics {
            epoch,
            train_loss: epoch_loss,
            validation_accuracy: val_acc,
        });
        if best.as_ref().map_or(true, |(_, b, _)| val_acc > *b) {
            best = Some((epoch, val_acc, net.clone()));
        }
    }

    let (best_epoch, best_validation_accuracy, network) = match best {
        Some(b) => b,
        None => (0, accuracy_of(&net, selection_set, cfg.execution)?, net),
    };
    Ok(TrainedModel {
        network,
        vocab,
        labels,
        best_epoch,
        best_validation_accuracy,
        config: cfg.clone(),
        history,
    })
}

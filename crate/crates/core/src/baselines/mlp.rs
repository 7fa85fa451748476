//! Bag-of-tokens perceptron: token-presence input, two ReLU layers, softmax.

use serde::{Deserialize, Serialize};

use super::TokenVocabulary;
use crate::data::DomainCatalog;
use crate::error::{Error, Result};
use crate::layers::{softmax, SoftmaxOutput};
use crate::numerics::{init_uniform, matvec, Array1, Array2, Rng, DEFAULT_INIT_SCALE};
use crate::training::{nll_loss, stratified_split, streams, AdamParams, AdamState, EpochMetrics, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: [usize; 2],
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub init_scale: f64,
    pub adam: AdamParams,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self::from_train(&TrainConfig::default())
    }
}

impl MlpConfig {
    /// Shares optimiser and schedule settings with a network configuration.
    pub fn from_train(cfg: &TrainConfig) -> Self {
        Self {
            hidden: [300, 50],
            learning_rate: cfg.learning_rate,
            batch_size: cfg.batch_size,
            epochs: cfg.epochs,
            seed: cfg.seed,
            validation_fraction: cfg.validation_fraction,
            init_scale: DEFAULT_INIT_SCALE,
            adam: cfg.adam(),
        }
    }

    fn adam_with_lr(&self) -> AdamParams {
        AdamParams {
            learning_rate: self.learning_rate,
            ..self.adam
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::arg("hidden layer widths must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::arg("learning rate must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::arg("validation fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// One row of first-layer weights per token.
    pub token_weights: Array2,
    pub b1: Array1,
    pub w2: Array2,
    pub b2: Array1,
    pub output: SoftmaxOutput,
}

impl MlpParams {
    fn zeros(vocab: usize, hidden: [usize; 2], classes: usize) -> Self {
        Self {
            token_weights: Array2::zeros(vocab, hidden[0]),
            b1: Array1::zeros(hidden[0]),
            w2: Array2::zeros(hidden[1], hidden[0]),
            b2: Array1::zeros(hidden[1]),
            output: SoftmaxOutput::zeros(hidden[1], classes),
        }
    }

    fn init(rng: &mut Rng, vocab: usize, hidden: [usize; 2], classes: usize, scale: f64) -> Result<Self> {
        Ok(Self {
            token_weights: init_uniform(rng, vocab.max(1), hidden[0], scale)?,
            b1: Array1::zeros(hidden[0]),
            w2: init_uniform(rng, hidden[1], hidden[0], scale)?,
            b2: Array1::zeros(hidden[1]),
            output: SoftmaxOutput::new(rng, hidden[1], classes, scale)?,
        })
    }

    fn slices(&self) -> Vec<&[f64]> {
        vec![
            self.token_weights.as_slice(),
            self.b1.as_slice(),
            self.w2.as_slice(),
            self.b2.as_slice(),
            self.output.weights.as_slice(),
            self.output.bias.as_slice(),
        ]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.token_weights.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.b2.as_mut_slice(),
            self.output.weights.as_mut_slice(),
            self.output.bias.as_mut_slice(),
        ]
    }

    fn hidden(&self, features: &[usize]) -> Result<(Array1, Array1, Array1, Array1)> {
        let mut a1 = self.b1.clone();
        for &t in features {
            for (a, w) in a1.as_mut_slice().iter_mut().zip(self.token_weights.row(t)) {
                *a += w;
            }
        }
        let h1 = a1.map(|v| v.max(0.0));
        let mut a2 = matvec(&self.w2, &h1)?;
        a2.axpy(1.0, &self.b2)?;
        let h2 = a2.map(|v| v.max(0.0));
        Ok((a1, h1, a2, h2))
    }

    fn probabilities(&self, features: &[usize]) -> Result<Array1> {
        let (_, _, _, h2) = self.hidden(features)?;
        Ok(softmax(&self.output.logits(&h2)?))
    }

    /// Adds the gradient of one example's loss into `grad`; returns the loss.
    fn accumulate(&self, features: &[usize], class: usize, grad: &mut MlpParams) -> Result<f64> {
        let (a1, h1, a2, h2) = self.hidden(features)?;
        let probs = softmax(&self.output.logits(&h2)?);
        let dh2 = self.output.backward(&h2, &probs, class, &mut grad.output)?;
        let da2 = Array1::from_vec(dh2.iter().zip(a2.iter()).map(|(&d, &a)| if a > 0.0 { d } else { 0.0 }).collect());
        grad.w2.add_outer(1.0, da2.as_slice(), h1.as_slice())?;
        grad.b2.axpy(1.0, &da2)?;
        let dh1 = self.w2.matvec_t(&da2)?;
        let da1 = Array1::from_vec(dh1.iter().zip(a1.iter()).map(|(&d, &a)| if a > 0.0 { d } else { 0.0 }).collect());
        grad.b1.axpy(1.0, &da1)?;
        for &t in features {
            for (g, d) in grad.token_weights.row_mut(t).iter_mut().zip(da1.iter()) {
                *g += d;
            }
        }
        Ok(nll_loss(&probs, class))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub tokens: TokenVocabulary,
    pub labels: Vec<String>,
    pub params: MlpParams,
    pub best_epoch: usize,
    pub best_validation_accuracy: f64,
    pub history: Vec<EpochMetrics>,
}

impl MlpModel {
    pub fn probabilities(&self, value: &str) -> Result<Array1> {
        self.params.probabilities(&self.tokens.features(value))
    }

    pub fn predict_label(&self, value: &str) -> Result<&str> {
        Ok(&self.labels[mlp_predict(self, value)?.0])
    }
}

/// Predicted class index and its probability.
pub fn mlp_predict(model: &MlpModel, value: &str) -> Result<(usize, f64)> {
    let p = model.probabilities(value)?;
    let k = p.argmax().ok_or_else(|| Error::Internal("empty probability vector".into()))?;
    Ok((k, p[k]))
}

fn accuracy(params: &MlpParams, examples: &[&(Vec<usize>, usize)]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (f, c) in examples {
        if params.probabilities(f)?.argmax() == Some(*c) {
            hits += 1;
        }
    }
    Ok(hits as f64 / examples.len() as f64)
}

/// Same protocol as the network trainer: stratified validation split, seeded
/// shuffling, summed minibatch loss, Adam, best-validation epoch kept.
pub fn mlp_train(catalog: &DomainCatalog, cfg: &MlpConfig) -> Result<MlpModel> {
    cfg.validate()?;
    if catalog.num_classes() < 2 {
        return Err(Error::arg(format!(
            "training needs at least two attributes, catalog has {}",
            catalog.num_classes()
        )));
    }
    let tokens = TokenVocabulary::build(catalog.records().map(|r| r.value.as_str()));
    let labels = catalog.labels();
    let examples: Vec<(Vec<usize>, usize)> = catalog
        .labelled()
        .into_iter()
        .map(|(r, c)| (tokens.features(&r.value), c))
        .collect();
    let classes: Vec<usize> = examples.iter().map(|e| e.1).collect();
    let (train_idx, val_idx) = stratified_split(
        &classes,
        cfg.validation_fraction,
        &mut Rng::derived(cfg.seed, streams::SPLIT),
    );
    let train_set: Vec<&(Vec<usize>, usize)> = train_idx.iter().map(|&i| &examples[i]).collect();
    let val_set: Vec<&(Vec<usize>, usize)> = val_idx.iter().map(|&i| &examples[i]).collect();
    let selection = if val_set.is_empty() { &train_set } else { &val_set };

    let mut params = MlpParams::init(
        &mut Rng::derived(cfg.seed, streams::INIT),
        tokens.len(),
        cfg.hidden,
        labels.len(),
        cfg.init_scale,
    )?;
    let mut adam = AdamState::new(params.slices().iter().map(|s| s.len()));
    let mut shuffle = Rng::derived(cfg.seed, streams::SHUFFLE);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(usize, f64, MlpParams)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        shuffle.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut grad = MlpParams::zeros(params.token_weights.rows(), cfg.hidden, labels.len());
            for &i in chunk {
                let (f, c) = train_set[i];
                epoch_loss += params.accumulate(f, *c, &mut grad)?;
            }
            let grads = grad.slices();
            adam.step(&cfg.adam_with_lr(), &mut params.slices_mut(), &grads)?;
        }
        let acc = accuracy(&params, selection)?;
        history.push(EpochMetrics {
            epoch,
            train_loss: epoch_loss,
            validation_accuracy: acc,
        });
        if best.as_ref().map_or(true, |(_, b, _)| acc > *b) {
            best = Some((epoch, acc, params.clone()));
        }
    }
    let (best_epoch, best_validation_accuracy, params) = match best {
        Some(b) => b,
        None => (0, accuracy(&params, selection)?, params),
    };
    Ok(MlpModel {
        tokens,
        labels,
        params,
        best_epoch,
        best_validation_accuracy,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AttributeRecord;
    use crate::training::gradcheck::relative_error;

    fn toy_catalog() -> DomainCatalog {
        let rows = [
            ("s", "color", "black"),
            ("s", "color", "dark red"),
            ("s", "color", "white"),
            ("s", "color", "red"),
            ("s", "color", "light blue"),
            ("s", "price", "$12,000"),
            ("s", "price", "$9,500 usd"),
            ("s", "price", "usd 400"),
            ("s", "price", "$ 7"),
            ("s", "price", "$5,000"),
        ];
        DomainCatalog::from_records(rows.iter().map(|&(s, a, v)| AttributeRecord::new(s, a, v))).unwrap()
    }

    fn cfg() -> MlpConfig {
        MlpConfig {
            hidden: [16, 8],
            learning_rate: 1e-2,
            epochs: 30,
            batch_size: 2,
            ..MlpConfig::default()
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = Rng::new(4);
        let mut p = MlpParams::init(&mut rng, 6, [5, 4], 3, 0.5).unwrap();
        for b in p.b1.as_mut_slice().iter_mut().chain(p.b2.as_mut_slice()) {
            *b = rng.uniform(0.05, 0.3);
        }
        let feats = [0, 2, 5];
        let mut grad = MlpParams::zeros(6, [5, 4], 3);
        p.accumulate(&feats, 1, &mut grad).unwrap();
        let analytic: Vec<Vec<f64>> = grad.slices().iter().map(|s| s.to_vec()).collect();
        let eps = 1e-6;
        for (k, g) in analytic.iter().enumerate() {
            for i in 0..g.len() {
                let orig = p.slices()[k][i];
                p.slices_mut()[k][i] = orig + eps;
                let up = nll_loss(&p.probabilities(&feats).unwrap(), 1);
                p.slices_mut()[k][i] = orig - eps;
                let down = nll_loss(&p.probabilities(&feats).unwrap(), 1);
                p.slices_mut()[k][i] = orig;
                let num = (up - down) / (2.0 * eps);
                assert!(relative_error(g[i], num) < 1e-5, "group {k} coord {i}: {} vs {num}", g[i]);
            }
        }
    }

    #[test]
    fn learns_separable_toy() {
        let cat = toy_catalog();
        let m = mlp_train(&cat, &cfg()).unwrap();
        assert_eq!(m.predict_label("black").unwrap(), "color");
        assert_eq!(m.predict_label("$12,000").unwrap(), "price");
    }

    #[test]
    fn token_order_and_unknown_tokens() {
        let m = mlp_train(&toy_catalog(), &cfg()).unwrap();
        assert_eq!(
            mlp_predict(&m, "dark red").unwrap(),
            mlp_predict(&m, "red dark").unwrap()
        );
        let a = mlp_predict(&m, "zzz qqq").unwrap();
        let b = mlp_predict(&m, "").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deterministic() {
        let a = mlp_train(&toy_catalog(), &cfg()).unwrap();
        let b = mlp_train(&toy_catalog(), &cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_single_class() {
        let cat = DomainCatalog::from_records([AttributeRecord::new("s", "a", "x")]).unwrap();
        assert!(matches!(mlp_train(&cat, &cfg()), Err(Error::Argument(_))));
    }
}

//! The two-branch network: shared character embeddings feed a convolutional
//! max-over-time branch and an LSTM branch, each ending in a rectified dropout
//! hidden layer; a pooling combiner merges the branch vectors and a softmax
//! layer predicts the attribute.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::combiner::PoolingOp;
use super::conv::{ConvCache, ConvMaxOverTime};
use super::dense::{DropoutHidden, Mode};
use super::embedding::EmbeddingTable;
use super::lstm::{LstmCache, LstmLayer, LstmOutput};
use super::softmax::SoftmaxOutput;
use crate::data::EOS;
use crate::error::{Error, Result};
use crate::numerics::{relu, Array1, Array2, Rng, DEFAULT_INIT_SCALE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchMode {
    Hybrid,
    CnnOnly,
    LstmOnly,
}

impl BranchMode {
    pub fn name(self) -> &'static str {
        match self {
            BranchMode::Hybrid => "hybrid",
            BranchMode::CnnOnly => "cnn-only",
            BranchMode::LstmOnly => "lstm-only",
        }
    }

    fn has_cnn(self) -> bool {
        self != BranchMode::LstmOnly
    }

    fn has_rnn(self) -> bool {
        self != BranchMode::CnnOnly
    }
}

impl fmt::Display for BranchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BranchMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hybrid" => Ok(BranchMode::Hybrid),
            "cnn-only" | "cnn" => Ok(BranchMode::CnnOnly),
            "lstm-only" | "lstm" => Ok(BranchMode::LstmOnly),
            other => Err(Error::arg(format!("unknown branch mode {other:?}"))),
        }
    }
}

/// Architecture hyper-parameters. Everything needed to rebuild a network of
/// the same shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub vocab_size: usize,
    pub num_classes: usize,
    pub embedding_size: usize,
    pub window: usize,
    pub conv_filters: usize,
    pub lstm_hidden: usize,
    /// Output width of both branch hidden layers.
    pub branch_dim: usize,
    pub pooling: PoolingOp,
    pub branch_mode: BranchMode,
    pub drop_rate: f64,
    pub shared_embedding: bool,
    pub lstm_output: LstmOutput,
    pub init_scale: f64,
}

impl NetworkConfig {
    /// Filter count, LSTM width and branch width all default to the embedding size.
    pub fn new(vocab_size: usize, num_classes: usize, embedding_size: usize, window: usize) -> Self {
        Self {
            vocab_size,
            num_classes,
            embedding_size,
            window,
            conv_filters: embedding_size,
            lstm_hidden: embedding_size,
            branch_dim: embedding_size,
            pooling: PoolingOp::Max,
            branch_mode: BranchMode::Hybrid,
            drop_rate: 0.25,
            shared_embedding: true,
            lstm_output: LstmOutput::Final,
            init_scale: DEFAULT_INIT_SCALE,
        }
    }

    pub fn keep_prob(&self) -> f64 {
        1.0 - self.drop_rate
    }

    pub fn feature_dim(&self) -> Result<usize> {
        match self.branch_mode {
            BranchMode::Hybrid => self.pooling.output_dim(self.branch_dim, self.branch_dim),
            _ => Ok(self.branch_dim),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.num_classes == 0 {
            return Err(Error::arg("network needs a nonempty vocabulary and at least one class"));
        }
        if self.embedding_size == 0
            || self.window == 0
            || self.conv_filters == 0
            || self.lstm_hidden == 0
            || self.branch_dim == 0
        {
            return Err(Error::arg("network dimensions must be positive"));
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(Error::arg(format!(
                "drop rate must lie in [0, 1), got {}",
                self.drop_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CnnBranch {
    pub conv: ConvMaxOverTime,
    pub hidden: DropoutHidden,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RnnBranch {
    pub lstm: LstmLayer,
    pub hidden: DropoutHidden,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HybridNetwork {
    pub config: NetworkConfig,
    /// Shared table, or the CNN branch's table when tables are per-branch.
    pub embedding: EmbeddingTable,
    /// Present only for a hybrid network with per-branch tables.
    pub lstm_embedding: Option<EmbeddingTable>,
    pub cnn: Option<CnnBranch>,
    pub rnn: Option<RnnBranch>,
    pub output: SoftmaxOutput,
}

/// A named view of one parameter array.
pub struct Tensor<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

pub struct TensorMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

#[derive(Clone, Debug)]
struct CnnCache {
    indices: Vec<usize>,
    embedded: Vec<Array1>,
    conv: ConvCache,
    pooled: Array1,
    mask: Array1,
    pre_activation: Array1,
}

#[derive(Clone, Debug)]
struct RnnCache {
    embedded: Vec<Array1>,
    lstm: LstmCache,
    state: Array1,
    mask: Array1,
    pre_activation: Array1,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    config: NetworkConfig,
    mode: Mode,
    indices: Vec<usize>,
    cnn: Option<CnnCache>,
    rnn: Option<RnnCache>,
    cnn_out: Option<Array1>,
    rnn_out: Option<Array1>,
    features: Array1,
    pub probs: Array1,
}

impl ForwardCache {
    pub fn features(&self) -> &Array1 {
        &self.features
    }

    pub fn cnn_window_count(&self) -> Option<usize> {
        self.cnn.as_ref().map(|c| c.conv.num_windows)
    }
}

/// Right-pads with EOS so that at least one convolution window fits.
pub fn pad_for_window(indices: &[usize], window: usize) -> Vec<usize> {
    let mut out = indices.to_vec();
    while out.len() < window {
        out.push(EOS);
    }
    out
}

impl HybridNetwork {
    pub fn new(config: NetworkConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let s = config.init_scale;
        let d = config.embedding_size;
        let embedding = EmbeddingTable::new(rng, config.vocab_size, d, s)?;
        let lstm_embedding = if !config.shared_embedding && config.branch_mode == BranchMode::Hybrid {
            Some(EmbeddingTable::new(rng, config.vocab_size, d, s)?)
        } else {
            None
        };
        let cnn = if config.branch_mode.has_cnn() {
            Some(CnnBranch {
                conv: ConvMaxOverTime::new(rng, config.window, d, config.conv_filters, s)?,
                hidden: DropoutHidden::new(rng, config.conv_filters, config.branch_dim, s)?,
            })
        } else {
            None
        };
        let rnn = if config.branch_mode.has_rnn() {
            Some(RnnBranch {
                lstm: LstmLayer::new(rng, d, config.lstm_hidden, s)?,
                hidden: DropoutHidden::new(rng, config.lstm_hidden, config.branch_dim, s)?,
            })
        } else {
            None
        };
        let output = SoftmaxOutput::new(rng, config.feature_dim()?, config.num_classes, s)?;
        Ok(Self {
            config,
            embedding,
            lstm_embedding,
            cnn,
            rnn,
            output,
        })
    }

    /// Every parameter zero.
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let d = c.embedding_size;
        Ok(Self {
            embedding: EmbeddingTable::zeros(c.vocab_size, d),
            lstm_embedding: (!c.shared_embedding && c.branch_mode == BranchMode::Hybrid)
                .then(|| EmbeddingTable::zeros(c.vocab_size, d)),
            cnn: c.branch_mode.has_cnn().then(|| CnnBranch {
                conv: ConvMaxOverTime::zeros(c.window, d, c.conv_filters),
                hidden: DropoutHidden::zeros(c.conv_filters, c.branch_dim),
            }),
            rnn: c.branch_mode.has_rnn().then(|| RnnBranch {
                lstm: LstmLayer::zeros(d, c.lstm_hidden),
                hidden: DropoutHidden::zeros(c.lstm_hidden, c.branch_dim),
            }),
            output: SoftmaxOutput::zeros(c.feature_dim()?, c.num_classes),
            config,
        })
    }

    /// Same architecture with every parameter zero; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config.clone()).expect("config was validated at construction")
    }

    pub fn tensors(&self) -> Vec<Tensor<'_>> {
        fn m<'a>(name: &str, a: &'a Array2) -> Tensor<'a> {
            Tensor {
                name: name.to_string(),
                shape: vec![a.rows(), a.cols()],
                data: a.as_slice(),
            }
        }
        fn v<'a>(name: &str, a: &'a Array1) -> Tensor<'a> {
            Tensor {
                name: name.to_string(),
                shape: vec![a.len()],
                data: a.as_slice(),
            }
        }
        let mut out = Vec::new();
        out.push(m("embedding", &self.embedding.weights));
        if let Some(e) = &self.lstm_embedding {
            out.push(m("lstm_embedding", &e.weights));
        }
        if let Some(c) = &self.cnn {
            out.push(m("conv.filter", &c.conv.filter));
            out.push(v("conv.bias", &c.conv.bias));
            out.push(m("cnn_hidden.weight", &c.hidden.weights));
            out.push(v("cnn_hidden.bias", &c.hidden.bias));
        }
        if let Some(r) = &self.rnn {
            let l = &r.lstm;
            for (name, w) in [
                ("lstm.w_xi", &l.w_xi),
                ("lstm.w_hi", &l.w_hi),
                ("lstm.w_xf", &l.w_xf),
                ("lstm.w_hf", &l.w_hf),
                ("lstm.w_xc", &l.w_xc),
                ("lstm.w_hc", &l.w_hc),
                ("lstm.w_xo", &l.w_xo),
                ("lstm.w_ho", &l.w_ho),
            ] {
                out.push(m(name, w));
            }
            for (name, b) in [
                ("lstm.b_i", &l.b_i),
                ("lstm.b_f", &l.b_f),
                ("lstm.b_c", &l.b_c),
                ("lstm.b_o", &l.b_o),
            ] {
                out.push(v(name, b));
            }
            out.push(m("rnn_hidden.weight", &r.hidden.weights));
            out.push(v("rnn_hidden.bias", &r.hidden.bias));
        }
        out.push(m("output.weight", &self.output.weights));
        out.push(v("output.bias", &self.output.bias));
        out
    }

    /// Mutable views in the same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        fn m<'a>(name: &str, a: &'a mut Array2) -> TensorMut<'a> {
            TensorMut {
                name: name.to_string(),
                shape: vec![a.rows(), a.cols()],
                data: a.as_mut_slice(),
            }
        }
        fn v<'a>(name: &str, a: &'a mut Array1) -> TensorMut<'a> {
            TensorMut {
                name: name.to_string(),
                shape: vec![a.len()],
                data: a.as_mut_slice(),
            }
        }
        let mut out = Vec::new();
        out.push(m("embedding", &mut self.embedding.weights));
        if let Some(e) = &mut self.lstm_embedding {
            out.push(m("lstm_embedding", &mut e.weights));
        }
        if let Some(c) = &mut self.cnn {
            out.push(m("conv.filter", &mut c.conv.filter));
            out.push(v("conv.bias", &mut c.conv.bias));
            out.push(m("cnn_hidden.weight", &mut c.hidden.weights));
            out.push(v("cnn_hidden.bias", &mut c.hidden.bias));
        }
        if let Some(r) = &mut self.rnn {
            let l = &mut r.lstm;
            out.push(m("lstm.w_xi", &mut l.w_xi));
            out.push(m("lstm.w_hi", &mut l.w_hi));
            out.push(m("lstm.w_xf", &mut l.w_xf));
            out.push(m("lstm.w_hf", &mut l.w_hf));
            out.push(m("lstm.w_xc", &mut l.w_xc));
            out.push(m("lstm.w_hc", &mut l.w_hc));
            out.push(m("lstm.w_xo", &mut l.w_xo));
            out.push(m("lstm.w_ho", &mut l.w_ho));
            out.push(v("lstm.b_i", &mut l.b_i));
            out.push(v("lstm.b_f", &mut l.b_f));
            out.push(v("lstm.b_c", &mut l.b_c));
            out.push(v("lstm.b_o", &mut l.b_o));
            out.push(m("rnn_hidden.weight", &mut r.hidden.weights));
            out.push(v("rnn_hidden.bias", &mut r.hidden.bias));
        }
        out.push(m("output.weight", &mut self.output.weights));
        out.push(v("output.bias", &mut self.output.bias));
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// `self += alpha * other` over every parameter.
    pub fn add_scaled(&mut self, alpha: f64, other: &HybridNetwork) -> Result<()> {
        let theirs = other.tensors();
        let mine = self.tensors_mut();
        if mine.len() != theirs.len() {
            return Err(Error::shape("add_scaled", mine.len(), theirs.len()));
        }
        for (a, b) in mine.into_iter().zip(theirs) {
            if a.shape != b.shape {
                return Err(Error::shape("add_scaled", format!("{:?}", a.shape), format!("{:?}", b.shape)));
            }
            for (x, y) in a.data.iter_mut().zip(b.data) {
                *x += alpha * y;
            }
        }
        Ok(())
    }

    pub fn forward(
        &self,
        indices: &[usize],
        mode: Mode,
        mut rng: Option<&mut Rng>,
    ) -> Result<(Array1, ForwardCache)> {
        let cfg = &self.config;
        let keep = cfg.keep_prob();

        let (cnn_cache, cnn_out) = match &self.cnn {
            Some(branch) => {
                let padded = pad_for_window(indices, cfg.window);
                let embedded = self.embedding.embed(&padded)?;
                let (pooled, conv) = branch.conv.forward(&embedded)?;
                let (pre, mask) = branch.hidden.forward(&pooled, keep, mode, rng.as_deref_mut())?;
                let out = relu(&pre);
                (
                    Some(CnnCache {
                        indices: padded,
                        embedded,
                        conv,
                        pooled,
                        mask,
                        pre_activation: pre,
                    }),
                    Some(out),
                )
            }
            None => (None, None),
        };

        let (rnn_cache, rnn_out) = match &self.rnn {
            Some(branch) => {
                let table = self.lstm_embedding.as_ref().unwrap_or(&self.embedding);
                let embedded = table.embed(indices)?;
                let (state, lstm) = branch.lstm.forward(&embedded, cfg.lstm_output)?;
                let (pre, mask) = branch.hidden.forward(&state, keep, mode, rng.as_deref_mut())?;
                let out = relu(&pre);
                (
                    Some(RnnCache {
                        embedded,
                        lstm,
                        state,
                        mask,
                        pre_activation: pre,
                    }),
                    Some(out),
                )
            }
            None => (None, None),
        };

        let features = match (&cnn_out, &rnn_out) {
            (Some(u), Some(v)) => cfg.pooling.combine(u, v)?,
            (Some(u), None) => u.clone(),
            (None, Some(v)) => v.clone(),
            (None, None) => return Err(Error::Internal("network has no branches".into())),
        };
        let probs = self.output.forward(&features)?;
        let cache = ForwardCache {
            config: cfg.clone(),
            mode,
            indices: indices.to_vec(),
            cnn: cnn_cache,
            rnn: rnn_cache,
            cnn_out,
            rnn_out,
            features,
            probs: probs.clone(),
        };
        Ok((probs, cache))
    }

    /// Deterministic class probabilities.
    pub fn predict(&self, indices: &[usize]) -> Result<Array1> {
        Ok(self.forward(indices, Mode::Test, None)?.0)
    }

    /// Gradient of `-log P(true_class | x)` for the input cached by a train-mode forward.
    pub fn backward(&self, cache: &ForwardCache, true_class: usize) -> Result<HybridNetwork> {
        let mut grad = self.zeros_like();
        self.backward_into(cache, true_class, &mut grad)?;
        Ok(grad)
    }

    /// Like [`backward`](Self::backward) but accumulates into an existing gradient.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        true_class: usize,
        grad: &mut HybridNetwork,
    ) -> Result<()> {
        if cache.mode != Mode::Train {
            return Err(Error::Usage("backward needs a train-mode forward cache".into()));
        }
        if cache.config != self.config || grad.config != self.config {
            return Err(Error::Usage(
                "forward cache or gradient buffer belongs to a different network".into(),
            ));
        }

        let dfeat = self
            .output
            .backward(&cache.features, &cache.probs, true_class, &mut grad.output)?;

        let (du, dv) = match (&cache.cnn_out, &cache.rnn_out) {
            (Some(u), Some(v)) => {
                let (du, dv) = self.config.pooling.backward(u, v, &dfeat)?;
                (Some(du), Some(dv))
            }
            (Some(_), None) => (Some(dfeat), None),
            (None, Some(_)) => (None, Some(dfeat)),
            (None, None) => return Err(Error::Internal("network has no branches".into())),
        };

        if let (Some(branch), Some(c), Some(du), Some(g)) =
            (&self.cnn, &cache.cnn, du, grad.cnn.as_mut())
        {
            let dpre = relu_backward(&c.pre_activation, &du);
            let dpooled = branch.hidden.backward(&c.pooled, &c.mask, &dpre, &mut g.hidden)?;
            let de = branch.conv.backward(&c.embedded, &c.conv, &dpooled, &mut g.conv);
            EmbeddingTable::backward(&c.indices, &de, &mut grad.embedding);
        }

        if let (Some(branch), Some(c), Some(dv)) = (&self.rnn, &cache.rnn, dv) {
            let g = grad
                .rnn
                .as_mut()
                .ok_or_else(|| Error::Internal("gradient buffer lacks LSTM branch".into()))?;
            let dpre = relu_backward(&c.pre_activation, &dv);
            let dstate = branch.hidden.backward(&c.state, &c.mask, &dpre, &mut g.hidden)?;
            let dx = branch.lstm.backward(&c.embedded, &c.lstm, &dstate, &mut g.lstm)?;
            let table = grad.lstm_embedding.as_mut().unwrap_or(&mut grad.embedding);
            EmbeddingTable::backward(&cache.indices, &dx, table);
        }
        Ok(())
    }
}

fn relu_backward(pre: &Array1, dout: &Array1) -> Array1 {
    Array1::from_vec(
        pre.iter()
            .zip(dout.iter())
            .map(|(&p, &g)| if p > 0.0 { g } else { 0.0 })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(mode: BranchMode, op: PoolingOp) -> HybridNetwork {
        let mut cfg = NetworkConfig::new(12, 3, 4, 3);
        cfg.conv_filters = 5;
        cfg.lstm_hidden = 5;
        cfg.branch_dim = 5;
        cfg.branch_mode = mode;
        cfg.pooling = op;
        cfg.init_scale = 0.5;
        HybridNetwork::new(cfg, &mut Rng::new(17)).unwrap()
    }

    #[test]
    fn probabilities_sum_to_one() {
        for op in PoolingOp::ALL {
            let net = tiny(BranchMode::Hybrid, op);
            let p = net.predict(&[0, 4, 5, 1]).unwrap();
            assert_eq!(p.len(), 3);
            assert!((p.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn short_value_is_padded_for_conv() {
        let net = tiny(BranchMode::Hybrid, PoolingOp::Max);
        let (_, cache) = net.forward(&[0, 1], Mode::Test, None).unwrap();
        assert_eq!(cache.cnn_window_count(), Some(1));
        let net5 = {
            let mut cfg = net.config.clone();
            cfg.window = 5;
            HybridNetwork::new(cfg, &mut Rng::new(1)).unwrap()
        };
        assert!(net5.predict(&[0, 3, 1]).is_ok());
        assert_eq!(pad_for_window(&[0, 3, 1], 5), vec![0, 3, 1, EOS, EOS]);
    }

    #[test]
    fn cnn_only_is_branch_plus_softmax() {
        let net = tiny(BranchMode::CnnOnly, PoolingOp::Max);
        assert!(net.rnn.is_none());
        let idx = [0, 3, 7, 8, 1];
        let p = net.predict(&idx).unwrap();
        let b = net.cnn.as_ref().unwrap();
        let e = net.embedding.embed(&idx).unwrap();
        let (pooled, _) = b.conv.forward(&e).unwrap();
        let (pre, _) = b.hidden.forward(&pooled, net.config.keep_prob(), Mode::Test, None).unwrap();
        let expected = net.output.forward(&relu(&pre)).unwrap();
        assert_eq!(p, expected);
    }

    #[test]
    fn test_mode_is_deterministic() {
        let net = tiny(BranchMode::Hybrid, PoolingOp::Mul);
        let a = net.predict(&[0, 3, 4, 5, 1]).unwrap();
        let b = net.predict(&[0, 3, 4, 5, 1]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn out_of_range_index_fails() {
        let net = tiny(BranchMode::Hybrid, PoolingOp::Max);
        assert!(matches!(net.predict(&[0, 99, 1]), Err(Error::Vocabulary { .. })));
    }

    #[test]
    fn backward_requires_train_cache() {
        let net = tiny(BranchMode::Hybrid, PoolingOp::Max);
        let (_, cache) = net.forward(&[0, 3, 1], Mode::Test, None).unwrap();
        assert!(matches!(net.backward(&cache, 0), Err(Error::Usage(_))));

        let other = tiny(BranchMode::CnnOnly, PoolingOp::Max);
        let (_, cache) = other.forward(&[0, 3, 1], Mode::Train, Some(&mut Rng::new(1))).unwrap();
        assert!(matches!(net.backward(&cache, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn zero_gradient_at_certain_prediction() {
        let mut net = tiny(BranchMode::Hybrid, PoolingOp::Sum);
        net.output.weights = Array2::zeros(3, 5);
        net.output.bias = Array1::from_vec(vec![0.0, 1e4, 0.0]);
        let (p, cache) = net.forward(&[0, 3, 4, 1], Mode::Train, Some(&mut Rng::new(2))).unwrap();
        assert_eq!(p[1], 1.0);
        let g = net.backward(&cache, 1).unwrap();
        for t in g.tensors() {
            assert!(t.data.iter().all(|&x| x == 0.0), "{}", t.name);
        }
    }

    #[test]
    fn tensor_views_agree() {
        let mut net = tiny(BranchMode::Hybrid, PoolingOp::Outer);
        let names: Vec<_> = net.tensors().iter().map(|t| t.name.clone()).collect();
        let names_mut: Vec<_> = net.tensors_mut().iter().map(|t| t.name.clone()).collect();
        assert_eq!(names, names_mut);
        assert_eq!(names.len(), 1 + 4 + 12 + 2 + 2);
    }

    #[test]
    fn per_branch_tables() {
        let mut cfg = tiny(BranchMode::Hybrid, PoolingOp::Max).config;
        cfg.shared_embedding = false;
        let net = HybridNetwork::new(cfg, &mut Rng::new(3)).unwrap();
        assert!(net.lstm_embedding.is_some());
        let (_, cache) = net.forward(&[0, 3, 4, 1], Mode::Train, Some(&mut Rng::new(1))).unwrap();
        let g = net.backward(&cache, 0).unwrap();
        let lstm_grad = g.lstm_embedding.unwrap();
        assert!(lstm_grad.weights.as_slice().iter().any(|&x| x != 0.0));
    }
}

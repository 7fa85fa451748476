//! Central finite-difference check of the analytic gradients.

use serde::Serialize;

use super::nll_loss;
use crate::error::{Error, Result};
use crate::layers::{softmax, BranchMode, HybridNetwork, Mode, NetworkConfig, PoolingOp};
use crate::numerics::{init_uniform, matvec, Array1, Array2, Rng};

/// Relative errors use `max(|analytic|, |numeric|, REL_FLOOR)` as denominator so
/// that coordinates whose true gradient is ~0 are judged on absolute error.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupError {
    pub name: String,
    pub coordinates: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
    pub eps: f64,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.max_rel_error <= self.tol)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn check_args(eps: f64, tol: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::arg(format!("finite-difference step must be positive, got {eps}")));
    }
    if !(tol > 0.0) {
        return Err(Error::arg(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

fn deterministic_loss(net: &HybridNetwork, indices: &[usize], class: usize) -> Result<f64> {
    let (probs, _) = net.forward(indices, Mode::Train, None)?;
    Ok(nll_loss(&probs, class))
}

/// Compares the backward pass of `net` against central differences on one input.
/// The network must have dropout disabled.
pub fn grad_check(
    net: &HybridNetwork,
    indices: &[usize],
    class: usize,
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    grad_check_with(net, indices, class, eps, tol, |_| {})
}

/// As [`grad_check`], with `tamper` applied to the analytic gradient first.
pub fn grad_check_with(
    net: &HybridNetwork,
    indices: &[usize],
    class: usize,
    eps: f64,
    tol: f64,
    tamper: impl FnOnce(&mut HybridNetwork),
) -> Result<GradCheckReport> {
    check_args(eps, tol)?;
    if net.config.drop_rate != 0.0 {
        return Err(Error::arg("gradient check needs dropout disabled (drop rate 0)"));
    }
    let (_, cache) = net.forward(indices, Mode::Train, None)?;
    let mut analytic = net.backward(&cache, class)?;
    tamper(&mut analytic);

    let mut probe = net.clone();
    let mut groups = Vec::new();
    let names: Vec<String> = net.tensors().iter().map(|t| t.name.clone()).collect();
    let grads: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.data.to_vec()).collect();
    for (k, name) in names.iter().enumerate() {
        let mut worst = 0.0f64;
        let len = grads[k].len();
        for i in 0..len {
            let orig = probe.tensors()[k].data[i];
            probe.tensors_mut()[k].data[i] = orig + eps;
            let up = deterministic_loss(&probe, indices, class)?;
            probe.tensors_mut()[k].data[i] = orig - eps;
            let down = deterministic_loss(&probe, indices, class)?;
            probe.tensors_mut()[k].data[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(grads[k][i], numeric));
        }
        groups.push(GroupError {
            name: name.clone(),
            coordinates: len,
            max_rel_error: worst,
        });
    }
    Ok(GradCheckReport { groups, eps, tol })
}

/// The small network used by the default check: d=4, hidden=5, k=3, three
/// classes, dropout off. Returns the network, an input and its class.
pub fn tiny_setup(
    pooling: PoolingOp,
    branch_mode: BranchMode,
    seed: u64,
) -> Result<(HybridNetwork, Vec<usize>, usize)> {
    let mut cfg = NetworkConfig::new(10, 3, 4, 3);
    cfg.conv_filters = 5;
    cfg.lstm_hidden = 5;
    cfg.branch_dim = 5;
    cfg.pooling = pooling;
    cfg.branch_mode = branch_mode;
    cfg.drop_rate = 0.0;
    cfg.init_scale = 0.5;
    let mut rng = Rng::new(seed);
    let mut net = HybridNetwork::new(cfg, &mut rng)?;
    // nonzero biases so every bias path is exercised
    for t in net.tensors_mut() {
        if t.shape.len() == 1 {
            for b in t.data.iter_mut() {
                *b = rng.uniform(-0.3, 0.3);
            }
        }
    }
    // BOS, seven characters, EOS
    let indices = vec![0, 3, 7, 4, 9, 5, 3, 8, 1];
    Ok((net, indices, 1))
}

/// Report for the default tiny network over every pooling operator and both
/// single-branch modes.
pub fn check_all(seed: u64, eps: f64, tol: f64) -> Result<Vec<(String, GradCheckReport)>> {
    let mut out = Vec::new();
    for op in PoolingOp::ALL {
        let (net, idx, class) = tiny_setup(op, BranchMode::Hybrid, seed)?;
        out.push((format!("hybrid-{op}"), grad_check(&net, &idx, class, eps, tol)?));
    }
    for mode in [BranchMode::CnnOnly, BranchMode::LstmOnly] {
        let (net, idx, class) = tiny_setup(PoolingOp::Max, mode, seed)?;
        out.push((mode.name().to_string(), grad_check(&net, &idx, class, eps, tol)?));
    }
    Ok(out)
}

/// Linear toy model: softmax over `W · mean(embeddings) + b`.
#[derive(Clone, Debug)]
pub struct MeanEmbeddingToy {
    pub embedding: Array2,
    pub weights: Array2,
    pub bias: Array1,
}

impl MeanEmbeddingToy {
    pub fn new(vocab: usize, dim: usize, classes: usize, seed: u64) -> Result<Self> {
        let mut rng = Rng::new(seed);
        Ok(Self {
            embedding: init_uniform(&mut rng, dim, vocab, 0.5)?,
            weights: init_uniform(&mut rng, classes, dim, 0.5)?,
            bias: Array1::from_vec((0..classes).map(|_| rng.uniform(-0.3, 0.3)).collect()),
        })
    }

    fn mean_embedding(&self, indices: &[usize]) -> Array1 {
        let mut m = Array1::zeros(self.embedding.rows());
        for &i in indices {
            m.axpy(1.0 / indices.len() as f64, &self.embedding.column(i))
                .expect("matching dims");
        }
        m
    }

    fn param_mut(&mut self, group: usize, i: usize) -> &mut f64 {
        match group {
            0 => &mut self.embedding.as_mut_slice()[i],
            1 => &mut self.weights.as_mut_slice()[i],
            _ => &mut self.bias.as_mut_slice()[i],
        }
    }

    pub fn loss(&self, indices: &[usize], class: usize) -> Result<f64> {
        let x = self.mean_embedding(indices);
        let mut z = matvec(&self.weights, &x)?;
        z.axpy(1.0, &self.bias)?;
        Ok(nll_loss(&softmax(&z), class))
    }

    /// Analytic gradients `(dE, dW, db)`.
    pub fn gradients(&self, indices: &[usize], class: usize) -> Result<(Array2, Array2, Array1)> {
        let x = self.mean_embedding(indices);
        let mut z = matvec(&self.weights, &x)?;
        z.axpy(1.0, &self.bias)?;
        let mut dz = softmax(&z);
        dz[class] -= 1.0;
        let mut dw = Array2::zeros(self.weights.rows(), self.weights.cols());
        dw.add_outer(1.0, dz.as_slice(), x.as_slice())?;
        let dx = self.weights.matvec_t(&dz)?;
        let mut de = Array2::zeros(self.embedding.rows(), self.embedding.cols());
        let scale = 1.0 / indices.len() as f64;
        for &i in indices {
            for r in 0..de.rows() {
                de[(r, i)] += scale * dx[r];
            }
        }
        Ok((de, dw, dz))
    }

    pub fn grad_check(&self, indices: &[usize], class: usize, eps: f64, tol: f64) -> Result<GradCheckReport> {
        check_args(eps, tol)?;
        let (de, dw, db) = self.gradients(indices, class)?;
        let mut probe = self.clone();
        let mut groups = Vec::new();
        for (g, (name, analytic)) in [
            ("embedding", de.as_slice()),
            ("output.weight", dw.as_slice()),
            ("output.bias", db.as_slice()),
        ]
        .into_iter()
        .enumerate()
        {
            let mut worst = 0.0f64;
            for (i, &a) in analytic.iter().enumerate() {
                let orig = *probe.param_mut(g, i);
                *probe.param_mut(g, i) = orig + eps;
                let up = probe.loss(indices, class)?;
                *probe.param_mut(g, i) = orig - eps;
                let down = probe.loss(indices, class)?;
                *probe.param_mut(g, i) = orig;
                worst = worst.max(relative_error(a, (up - down) / (2.0 * eps)));
            }
            groups.push(GroupError {
                name: name.to_string(),
                coordinates: analytic.len(),
                max_rel_error: worst,
            });
        }
        Ok(GradCheckReport { groups, eps, tol })
    }
}

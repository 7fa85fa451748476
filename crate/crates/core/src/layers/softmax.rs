use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{init_uniform, matvec, Array1, Array2, Rng};

/// Max-subtracted softmax.
pub fn softmax(logits: &Array1) -> Array1 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Array1::from_vec(exps.into_iter().map(|e| e / total).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxOutput {
    pub weights: Array2,
    pub bias: Array1,
}

impl SoftmaxOutput {
    pub fn new(rng: &mut Rng, in_dim: usize, num_classes: usize, scale: f64) -> Result<Self> {
        Ok(Self {
            weights: init_uniform(rng, num_classes, in_dim, scale)?,
            bias: Array1::zeros(num_classes),
        })
    }

    pub fn zeros(in_dim: usize, num_classes: usize) -> Self {
        Self {
            weights: Array2::zeros(num_classes, in_dim),
            bias: Array1::zeros(num_classes),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn logits(&self, x: &Array1) -> Result<Array1> {
        if x.len() != self.in_dim() {
            return Err(Error::shape("softmax input", self.in_dim(), x.len()));
        }
        let mut z = matvec(&self.weights, x)?;
        z.axpy(1.0, &self.bias)?;
        Ok(z)
    }

    pub fn forward(&self, x: &Array1) -> Result<Array1> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Backward of `-log probs[true_class]`: `dlogits = probs - onehot`.
    /// Accumulates into `grad` and returns `dx`.
    pub fn backward(
        &self,
        x: &Array1,
        probs: &Array1,
        true_class: usize,
        grad: &mut SoftmaxOutput,
    ) -> Result<Array1> {
        if true_class >= probs.len() {
            return Err(Error::arg(format!(
                "class {true_class} out of range for {} classes",
                probs.len()
            )));
        }
        let mut dz = probs.clone();
        dz[true_class] -= 1.0;
        grad.weights.add_outer(1.0, dz.as_slice(), x.as_slice())?;
        grad.bias.axpy(1.0, &dz)?;
        self.weights.matvec_t(&dz)
    }
}

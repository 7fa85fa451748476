use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{init_uniform, matvec, Array1, Array2, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Test,
}

/// Dense layer `y = W · (r ∗ z) + b` with a Bernoulli keep-mask `r` during
/// training and `W` scaled by the keep probability at test time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutHidden {
    pub weights: Array2,
    pub bias: Array1,
}

impl DropoutHidden {
    pub fn new(rng: &mut Rng, in_dim: usize, out_dim: usize, scale: f64) -> Result<Self> {
        Ok(Self {
            weights: init_uniform(rng, out_dim, in_dim, scale)?,
            bias: Array1::zeros(out_dim),
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weights: Array2::zeros(out_dim, in_dim),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    /// Plain `W · z + b`.
    pub fn dense(&self, z: &Array1) -> Result<Array1> {
        let mut y = matvec(&self.weights, z)?;
        y.axpy(1.0, &self.bias)?;
        Ok(y)
    }

    pub fn sample_mask(&self, keep_prob: f64, rng: &mut Rng) -> Array1 {
        if keep_prob >= 1.0 {
            return Array1::filled(self.in_dim(), 1.0);
        }
        Array1::from_vec(
            (0..self.in_dim())
                .map(|_| if rng.bernoulli(keep_prob) { 1.0 } else { 0.0 })
                .collect(),
        )
    }

    /// Forward pass with a given mask (train mode).
    pub fn forward_masked(&self, z: &Array1, mask: &Array1) -> Result<Array1> {
        if z.len() != self.in_dim() {
            return Err(Error::shape("dropout input", self.in_dim(), z.len()));
        }
        if mask.len() != z.len() {
            return Err(Error::shape("dropout mask", z.len(), mask.len()));
        }
        let masked = Array1::from_vec(z.iter().zip(mask.iter()).map(|(a, r)| a * r).collect());
        self.dense(&masked)
    }

    /// Returns the output and the mask that was applied.
    pub fn forward(
        &self,
        z: &Array1,
        keep_prob: f64,
        mode: Mode,
        rng: Option<&mut Rng>,
    ) -> Result<(Array1, Array1)> {
        match mode {
            Mode::Train => {
                let mask = match rng {
                    Some(rng) => self.sample_mask(keep_prob, rng),
                    None if keep_prob >= 1.0 => Array1::filled(self.in_dim(), 1.0),
                    None => {
                        return Err(Error::Usage(
                            "train-mode dropout needs a random generator".into(),
                        ))
                    }
                };
                let y = self.forward_masked(z, &mask)?;
                Ok((y, mask))
            }
            Mode::Test => {
                if z.len() != self.in_dim() {
                    return Err(Error::shape("dropout input", self.in_dim(), z.len()));
                }
                let mut y = matvec(&self.weights.scaled(keep_prob), z)?;
                y.axpy(1.0, &self.bias)?;
                Ok((y, Array1::filled(self.in_dim(), 1.0)))
            }
        }
    }

    /// Accumulates `dW`, `db` into `grad`; returns `dz`. Dropped units get zero gradient.
    pub fn backward(
        &self,
        z: &Array1,
        mask: &Array1,
        dy: &Array1,
        grad: &mut DropoutHidden,
    ) -> Result<Array1> {
        let masked: Vec<f64> = z.iter().zip(mask.iter()).map(|(a, r)| a * r).collect();
        grad.weights.add_outer(1.0, dy.as_slice(), &masked)?;
        grad.bias.axpy(1.0, dy)?;
        let dz = self.weights.matvec_t(dy)?;
        Ok(Array1::from_vec(
            dz.iter().zip(mask.iter()).map(|(d, r)| d * r).collect(),
        ))
    }
}

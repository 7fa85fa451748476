use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{init_uniform, Array1, Array2, Rng};

/// Character embeddings stored as a `d × |D|` matrix; column `i` is the
/// vector of character `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub weights: Array2,
}

impl EmbeddingTable {
    pub fn new(rng: &mut Rng, vocab_size: usize, dim: usize, scale: f64) -> Result<Self> {
        Ok(Self {
            weights: init_uniform(rng, dim, vocab_size, scale)?,
        })
    }

    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        Self {
            weights: Array2::zeros(dim, vocab_size),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.cols()
    }

    pub fn embed(&self, indices: &[usize]) -> Result<Vec<Array1>> {
        let size = self.vocab_size();
        indices
            .iter()
            .map(|&i| {
                if i >= size {
                    Err(Error::Vocabulary { index: i, size })
                } else {
                    Ok(self.weights.column(i))
                }
            })
            .collect()
    }

    /// Scatter-adds `grads[j]` into column `indices[j]` of `into`.
    pub fn backward(indices: &[usize], grads: &[Array1], into: &mut EmbeddingTable) {
        let cols = into.weights.cols();
        let w = into.weights.as_mut_slice();
        for (&idx, g) in indices.iter().zip(grads) {
            for (r, &gv) in g.iter().enumerate() {
                w[r * cols + idx] += gv;
            }
        }
    }
}

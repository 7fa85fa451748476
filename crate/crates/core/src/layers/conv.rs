use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, init_uniform, Array1, Array2, Rng};

/// 1-D convolution over windows of `window` consecutive embeddings followed by
/// an element-wise max across all window outputs.
///
/// `filter` has one row per output channel; each row is laid out as the `window`
/// embeddings of a window concatenated in time order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvMaxOverTime {
    pub window: usize,
    pub in_dim: usize,
    pub filter: Array2,
    pub bias: Array1,
}

/// For each output channel, the window that produced the maximum.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvCache {
    pub argmax: Vec<usize>,
    pub num_windows: usize,
}

impl ConvMaxOverTime {
    pub fn new(rng: &mut Rng, window: usize, in_dim: usize, out_dim: usize, scale: f64) -> Result<Self> {
        if window == 0 {
            return Err(Error::arg("convolution window must be at least 1"));
        }
        Ok(Self {
            window,
            in_dim,
            filter: init_uniform(rng, out_dim, window * in_dim, scale)?,
            bias: Array1::zeros(out_dim),
        })
    }

    pub fn zeros(window: usize, in_dim: usize, out_dim: usize) -> Self {
        Self {
            window,
            in_dim,
            filter: Array2::zeros(out_dim, window * in_dim),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.filter.rows()
    }

    fn check_input(&self, e: &[Array1]) -> Result<()> {
        if e.len() < self.window {
            return Err(Error::Internal(format!(
                "sequence of length {} is shorter than the convolution window {}",
                e.len(),
                self.window
            )));
        }
        if let Some(bad) = e.iter().find(|v| v.len() != self.in_dim) {
            return Err(Error::shape("conv input", self.in_dim, bad.len()));
        }
        Ok(())
    }

    fn window_output(&self, flat: &[f64], channel: usize) -> f64 {
        dot(self.filter.row(channel), flat) + self.bias[channel]
    }

    fn flat_window(&self, e: &[Array1], start: usize) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.window * self.in_dim);
        for v in &e[start..start + self.window] {
            flat.extend_from_slice(v.as_slice());
        }
        flat
    }

    /// The `n - (k - 1)` window vectors `v_i = F · e[i..i+k] + b`.
    pub fn window_outputs(&self, e: &[Array1]) -> Result<Vec<Array1>> {
        self.check_input(e)?;
        Ok((0..=e.len() - self.window)
            .map(|start| {
                let flat = self.flat_window(e, start);
                Array1::from_vec(
                    (0..self.out_dim())
                        .map(|ch| self.window_output(&flat, ch))
                        .collect(),
                )
            })
            .collect())
    }

    pub fn forward(&self, e: &[Array1]) -> Result<(Array1, ConvCache)> {
        let windows = self.window_outputs(e)?;
        let (pooled, argmax) = max_over_time(&windows);
        Ok((
            pooled,
            ConvCache {
                argmax,
                num_windows: windows.len(),
            },
        ))
    }

    /// Routes `dout[ch]` only to the window that won channel `ch`.
    /// Accumulates parameter gradients into `grad` and returns `d e`.
    pub fn backward(
        &self,
        e: &[Array1],
        cache: &ConvCache,
        dout: &Array1,
        grad: &mut ConvMaxOverTime,
    ) -> Vec<Array1> {
        let mut de = vec![Array1::zeros(self.in_dim); e.len()];
        for (ch, &start) in cache.argmax.iter().enumerate() {
            let g = dout[ch];
            if g == 0.0 {
                continue;
            }
            grad.bias[ch] += g;
            let frow = self.filter.row(ch);
            let grow = grad.filter.row_mut(ch);
            for (offset, v) in e[start..start + self.window].iter().enumerate() {
                let base = offset * self.in_dim;
                let dv = de[start + offset].as_mut_slice();
                for j in 0..self.in_dim {
                    grow[base + j] += g * v[j];
                    dv[j] += g * frow[base + j];
                }
            }
        }
        de
    }
}

/// Element-wise max across `windows`; the earliest window wins ties.
pub fn max_over_time(windows: &[Array1]) -> (Array1, Vec<usize>) {
    let dim = windows.first().map_or(0, Array1::len);
    let mut pooled = Array1::filled(dim, f64::NEG_INFINITY);
    let mut argmax = vec![0; dim];
    for (t, w) in windows.iter().enumerate() {
        for ch in 0..dim {
            if w[ch] > pooled[ch] {
                pooled[ch] = w[ch];
                argmax[ch] = t;
            }
        }
    }
    (pooled, argmax)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(rng: &mut Rng, n: usize, d: usize) -> Vec<Array1> {
        (0..n)
            .map(|_| Array1::from_vec((0..d).map(|_| rng.uniform(-1.0, 1.0)).collect()))
            .collect()
    }

    #[test]
    fn window_count() {
        let mut rng = Rng::new(5);
        let conv = ConvMaxOverTime::new(&mut rng, 3, 4, 6, 0.1).unwrap();
        let e = seq(&mut rng, 7, 4);
        assert_eq!(conv.window_outputs(&e).unwrap().len(), 5);
        let (out, cache) = conv.forward(&e).unwrap();
        assert_eq!(out.len(), 6);
        assert_eq!(cache.num_windows, 5);
    }

    #[test]
    fn zero_filter_gives_zero() {
        let conv = ConvMaxOverTime::zeros(3, 4, 5);
        let e = seq(&mut Rng::new(1), 9, 4);
        assert_eq!(conv.forward(&e).unwrap().0.as_slice(), &[0.0; 5]);
    }

    #[test]
    fn single_window_is_identity_of_max() {
        let mut rng = Rng::new(2);
        let conv = ConvMaxOverTime::new(&mut rng, 3, 2, 4, 0.3).unwrap();
        let e = seq(&mut rng, 3, 2);
        let windows = conv.window_outputs(&e).unwrap();
        assert_eq!(windows.len(), 1);
        assert_eq!(conv.forward(&e).unwrap().0, windows[0]);
    }

    #[test]
    fn too_short_is_internal_error() {
        let conv = ConvMaxOverTime::zeros(5, 2, 2);
        let e = seq(&mut Rng::new(1), 4, 2);
        assert!(matches!(conv.forward(&e), Err(Error::Internal(_))));
    }

    #[test]
    fn pooled_output_is_order_free_over_windows() {
        let mut rng = Rng::new(8);
        let conv = ConvMaxOverTime::new(&mut rng, 3, 3, 5, 0.5).unwrap();
        let e = seq(&mut rng, 12, 3);
        let mut windows = conv.window_outputs(&e).unwrap();
        let (a, _) = max_over_time(&windows);
        windows.reverse();
        let (b, _) = max_over_time(&windows);
        assert_eq!(a, b);
    }

    #[test]
    fn output_length_independent_of_sequence_length() {
        let mut rng = Rng::new(3);
        let conv = ConvMaxOverTime::new(&mut rng, 3, 2, 7, 0.1).unwrap();
        for n in 3..20 {
            assert_eq!(conv.forward(&seq(&mut rng, n, 2)).unwrap().0.len(), 7);
        }
    }
}

//! Dense double-precision vectors and matrices, element-wise operations,
//! activations and a seedable random generator.
//!
//! Everything the network layers need lives here; there is no dependency on
//! an external tensor library.

use std::ops::{Index, IndexMut};

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default half-width of the uniform weight initialisation.
pub const DEFAULT_INIT_SCALE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Array1 {
    data: Vec<f64>,
}

impl Array1 {
    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![0.0; len],
        }
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Self {
            data: vec![value; len],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self { data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Array1 {
        Array1::from_vec(self.data.iter().map(|&x| f(x)).collect())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Array1) -> Result<()> {
        check_len("axpy", self.len(), other.len())?;
        for (s, o) in self.data.iter_mut().zip(&other.data) {
            *s += alpha * o;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Index of the largest entry; the first one wins on ties.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &x) in self.data.iter().enumerate() {
            match best {
                Some((_, b)) if x <= b => {}
                _ => best = Some((i, x)),
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl Index<usize> for Array1 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for Array1 {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

impl From<Vec<f64>> for Array1 {
    fn from(data: Vec<f64>) -> Self {
        Self { data }
    }
}

/// Row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Array2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Array2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Array2::from_vec",
                format!("{} values for {rows}x{cols}", rows * cols),
                data.len(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_len("Array2::from_rows", cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Array1 {
        Array1::from_vec((0..self.rows).map(|r| self.data[r * self.cols + c]).collect())
    }

    pub fn scaled(&self, factor: f64) -> Array2 {
        Array2 {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    /// `self += alpha * a ⊗ b`
    pub fn add_outer(&mut self, alpha: f64, a: &[f64], b: &[f64]) -> Result<()> {
        check_len("add_outer rows", self.rows, a.len())?;
        check_len("add_outer cols", self.cols, b.len())?;
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            let s = alpha * ai;
            for (w, &bj) in self.row_mut(i).iter_mut().zip(b) {
                *w += s * bj;
            }
        }
        Ok(())
    }

    /// `mᵀ·x`
    pub fn matvec_t(&self, x: &Array1) -> Result<Array1> {
        check_len("matvec_t", self.rows, x.len())?;
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(i)) {
                *o += w * xi;
            }
        }
        Ok(Array1::from_vec(out))
    }
}

impl Index<(usize, usize)> for Array2 {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Array2 {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

fn check_len(op: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::shape(op, expected, found));
    }
    Ok(())
}

/// `m·x`
pub fn matvec(m: &Array2, x: &Array1) -> Result<Array1> {
    matvec_slice(m, x.as_slice())
}

pub(crate) fn matvec_slice(m: &Array2, x: &[f64]) -> Result<Array1> {
    check_len("matvec", m.cols, x.len())?;
    Ok(Array1::from_vec(
        (0..m.rows).map(|r| dot(m.row(r), x)).collect(),
    ))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EwiseOp {
    Add,
    Sub,
    Mul,
    Max,
    Avg,
}

impl EwiseOp {
    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            EwiseOp::Add => a + b,
            EwiseOp::Sub => a - b,
            EwiseOp::Mul => a * b,
            EwiseOp::Max => a.max(b),
            EwiseOp::Avg => 0.5 * (a + b),
        }
    }
}

pub fn ewise(op: EwiseOp, a: &Array1, b: &Array1) -> Result<Array1> {
    check_len("ewise", a.len(), b.len())?;
    Ok(Array1::from_vec(
        a.iter().zip(b.iter()).map(|(&x, &y)| op.apply(x, y)).collect(),
    ))
}

/// Row-major flattened outer product: `out[i * b.len() + j] = a[i] * b[j]`.
pub fn outer(a: &Array1, b: &Array1) -> Array1 {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a.iter() {
        out.extend(b.iter().map(|&y| x * y));
    }
    Array1::from_vec(out)
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: &Array1) -> Array1 {
    x.map(|v| v.max(0.0))
}

pub fn sigmoid(x: &Array1) -> Array1 {
    x.map(sigmoid_scalar)
}

pub fn tanh(x: &Array1) -> Array1 {
    x.map(f64::tanh)
}

/// Seedable generator. ChaCha8 keyed from the 64-bit seed, so a given seed
/// produces the same stream on every platform.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for a named sub-stream of `seed`.
    pub fn derived(seed: u64, stream: u64) -> Self {
        Self::new(derive_seed(seed, stream))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.gen_range(lo..=hi)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.inner.gen::<f64>() < p
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn choose<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len())]
    }
}

/// SplitMix64 finaliser applied to `seed ^ mix(stream)`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix(seed ^ splitmix(stream.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Matrix with entries i.i.d. uniform in `[-scale, scale]`.
pub fn init_uniform(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Result<Array2> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::arg(format!("init scale must be positive, got {scale}")));
    }
    let dist = Uniform::new_inclusive(-scale, scale);
    let data = (0..rows * cols).map(|_| dist.sample(&mut rng.inner)).collect();
    Array2::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use super::Rng;

    #[test]
    fn matvec_examples() {
        let x = Array1::from_vec(vec![3.0, 5.0]);
        assert_eq!(matvec(&Array2::identity(2), &x).unwrap().as_slice(), &[3.0, 5.0]);

        let z = Array2::zeros(2, 3);
        let y = Array1::from_vec(vec![1.5, -2.0, 9.0]);
        assert_eq!(matvec(&z, &y).unwrap().as_slice(), &[0.0, 0.0]);

        let m = Array2::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let ones = Array1::filled(2, 1.0);
        assert_eq!(matvec(&m, &ones).unwrap().as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn matvec_rejects_mismatch() {
        let m = Array2::zeros(2, 3);
        assert!(matches!(
            matvec(&m, &Array1::zeros(2)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn ewise_examples() {
        let a = Array1::from_vec(vec![1.0, 4.0]);
        let b = Array1::from_vec(vec![3.0, 2.0]);
        assert_eq!(ewise(EwiseOp::Max, &a, &b).unwrap().as_slice(), &[3.0, 4.0]);
        assert_eq!(ewise(EwiseOp::Mul, &a, &b).unwrap().as_slice(), &[3.0, 8.0]);
        let c = Array1::from_vec(vec![2.0, 0.0]);
        let d = Array1::from_vec(vec![0.0, 2.0]);
        assert_eq!(ewise(EwiseOp::Avg, &c, &d).unwrap().as_slice(), &[1.0, 1.0]);
        assert!(ewise(EwiseOp::Add, &a, &Array1::zeros(3)).is_err());
    }

    #[test]
    fn outer_examples() {
        let a = Array1::from_vec(vec![1.0, 2.0]);
        let b = Array1::from_vec(vec![3.0, 4.0]);
        assert_eq!(outer(&a, &b).as_slice(), &[3.0, 4.0, 6.0, 8.0]);
        assert_eq!(
            outer(&Array1::zeros(2), &Array1::from_vec(vec![7.0, -1.0])).as_slice(),
            &[0.0; 4]
        );
        assert_eq!(
            outer(&Array1::from_vec(vec![1.0]), &Array1::from_vec(vec![5.0, 6.0, 7.0])).as_slice(),
            &[5.0, 6.0, 7.0]
        );
    }

    #[test]
    fn activation_examples() {
        let x = Array1::from_vec(vec![-2.0, 0.0, 3.0]);
        assert_eq!(relu(&x).as_slice(), &[0.0, 0.0, 3.0]);
        assert_eq!(sigmoid(&Array1::zeros(1))[0], 0.5);
        assert_eq!(tanh(&Array1::zeros(1))[0], 0.0);
    }

    #[test]
    fn init_uniform_range_and_determinism() {
        let mut rng = Rng::new(11);
        let m = init_uniform(&mut rng, 100, 100, 0.05).unwrap();
        assert!(m.as_slice().iter().all(|w| w.abs() <= 0.05));

        let a = init_uniform(&mut Rng::new(3), 4, 5, 0.1).unwrap();
        let b = init_uniform(&mut Rng::new(3), 4, 5, 0.1).unwrap();
        assert_eq!(a, b);
        let c = init_uniform(&mut Rng::new(4), 4, 5, 0.1).unwrap();
        assert!(a.as_slice().iter().zip(c.as_slice()).any(|(x, y)| x != y));

        assert!(init_uniform(&mut rng, 2, 2, 0.0).is_err());
        assert!(init_uniform(&mut rng, 2, 2, -1.0).is_err());
    }

    #[test]
    fn derived_streams_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(9, 4), derive_seed(9, 4));
    }

    #[test]
    fn transpose_product_matches_explicit() {
        let m = Array2::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        let x = Array1::from_vec(vec![1.0, -1.0]);
        assert_eq!(m.matvec_t(&x).unwrap().as_slice(), &[-3.0, -3.0, -3.0]);
    }

    fn vec_pair(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1..=max).prop_flat_map(|n| {
            (
                prop::collection::vec(-1e3..1e3f64, n),
                prop::collection::vec(-1e3..1e3f64, n),
            )
        })
    }

    proptest! {
        #[test]
        fn ewise_commutes((a, b) in vec_pair(8)) {
            let a = Array1::from_vec(a);
            let b = Array1::from_vec(b);
            for op in [EwiseOp::Add, EwiseOp::Mul, EwiseOp::Max, EwiseOp::Avg] {
                prop_assert_eq!(ewise(op, &a, &b).unwrap(), ewise(op, &b, &a).unwrap());
            }
        }

        #[test]
        fn outer_indexing(a in prop::collection::vec(-10.0..10.0f64, 0..5),
                          b in prop::collection::vec(-10.0..10.0f64, 0..5)) {
            let o = outer(&Array1::from_vec(a.clone()), &Array1::from_vec(b.clone()));
            prop_assert_eq!(o.len(), a.len() * b.len());
            for i in 0..a.len() {
                for j in 0..b.len() {
                    prop_assert_eq!(o[i * b.len() + j], a[i] * b[j]);
                }
            }
        }

        #[test]
        fn matvec_distributes(seed in any::<u64>(), (a, b) in vec_pair(6)) {
            let n = a.len();
            let m = init_uniform(&mut Rng::new(seed), 4, n, 1.0).unwrap();
            let a = Array1::from_vec(a);
            let b = Array1::from_vec(b);
            let lhs = matvec(&m, &ewise(EwiseOp::Add, &a, &b).unwrap()).unwrap();
            let rhs = ewise(EwiseOp::Add, &matvec(&m, &a).unwrap(), &matvec(&m, &b).unwrap()).unwrap();
            for (x, y) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn activations_in_range(x in -1e6..1e6f64) {
            let r = relu(&Array1::from_vec(vec![x]))[0];
            prop_assert!(r >= 0.0);
            let s = sigmoid_scalar(x);
            prop_assert!((0.0..=1.0).contains(&s));
            let t = x.tanh();
            prop_assert!((-1.0..=1.0).contains(&t));
            if x.abs() < 30.0 {
                prop_assert!(s > 0.0 && s < 1.0);
            }
            if x.abs() < 15.0 {
                prop_assert!(t > -1.0 && t < 1.0);
            }
        }
    }
}

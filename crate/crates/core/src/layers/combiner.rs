use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ewise, outer, Array1, EwiseOp};

/// How the CNN and LSTM branch vectors are merged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolingOp {
    Max,
    Sum,
    Avg,
    Mul,
    Outer,
    Concat,
}

impl PoolingOp {
    pub const ALL: [PoolingOp; 6] = [
        PoolingOp::Max,
        PoolingOp::Sum,
        PoolingOp::Avg,
        PoolingOp::Mul,
        PoolingOp::Outer,
        PoolingOp::Concat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PoolingOp::Max => "max",
            PoolingOp::Sum => "sum",
            PoolingOp::Avg => "avg",
            PoolingOp::Mul => "mul",
            PoolingOp::Outer => "outer",
            PoolingOp::Concat => "concat",
        }
    }

    fn elementwise(self) -> Option<EwiseOp> {
        match self {
            PoolingOp::Max => Some(EwiseOp::Max),
            PoolingOp::Sum => Some(EwiseOp::Add),
            PoolingOp::Avg => Some(EwiseOp::Avg),
            PoolingOp::Mul => Some(EwiseOp::Mul),
            PoolingOp::Outer | PoolingOp::Concat => None,
        }
    }

    pub fn output_dim(self, u: usize, v: usize) -> Result<usize> {
        match self {
            PoolingOp::Outer => Ok(u * v),
            PoolingOp::Concat => Ok(u + v),
            _ if u != v => Err(Error::shape("combine", u, v)),
            _ => Ok(u),
        }
    }

    pub fn combine(self, u: &Array1, v: &Array1) -> Result<Array1> {
        match self {
            PoolingOp::Outer => Ok(outer(u, v)),
            PoolingOp::Concat => {
                let mut out = u.as_slice().to_vec();
                out.extend_from_slice(v.as_slice());
                Ok(Array1::from_vec(out))
            }
            op => ewise(op.elementwise().expect("element-wise op"), u, v),
        }
    }

    /// Gradients with respect to `u` and `v` given `dout`. For `max`, the
    /// gradient goes to `u` when the two entries tie.
    pub fn backward(self, u: &Array1, v: &Array1, dout: &Array1) -> Result<(Array1, Array1)> {
        let expected = self.output_dim(u.len(), v.len())?;
        if dout.len() != expected {
            return Err(Error::shape("combine backward", expected, dout.len()));
        }
        let n = u.len();
        Ok(match self {
            PoolingOp::Max => {
                let mut du = Array1::zeros(n);
                let mut dv = Array1::zeros(n);
                for i in 0..n {
                    if u[i] >= v[i] {
                        du[i] = dout[i];
                    } else {
                        dv[i] = dout[i];
                    }
                }
                (du, dv)
            }
            PoolingOp::Sum => (dout.clone(), dout.clone()),
            PoolingOp::Avg => (dout.map(|g| 0.5 * g), dout.map(|g| 0.5 * g)),
            PoolingOp::Mul => (
                Array1::from_vec((0..n).map(|i| dout[i] * v[i]).collect()),
                Array1::from_vec((0..n).map(|i| dout[i] * u[i]).collect()),
            ),
            PoolingOp::Outer => {
                let m = v.len();
                let mut du = Array1::zeros(n);
                let mut dv = Array1::zeros(m);
                for i in 0..n {
                    for j in 0..m {
                        let g = dout[i * m + j];
                        du[i] += g * v[j];
                        dv[j] += g * u[i];
                    }
                }
                (du, dv)
            }
            PoolingOp::Concat => (
                Array1::from_vec(dout.as_slice()[..n].to_vec()),
                Array1::from_vec(dout.as_slice()[n..].to_vec()),
            ),
        })
    }
}

impl fmt::Display for PoolingOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PoolingOp {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PoolingOp::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown pooling operation {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(v: &[f64]) -> Array1 {
        Array1::from_vec(v.to_vec())
    }

    #[test]
    fn examples() {
        assert_eq!(PoolingOp::Max.combine(&a(&[1.0, 4.0]), &a(&[3.0, 2.0])).unwrap(), a(&[3.0, 4.0]));
        assert_eq!(
            PoolingOp::Outer.combine(&a(&[1.0, 2.0]), &a(&[3.0, 4.0])).unwrap(),
            a(&[3.0, 4.0, 6.0, 8.0])
        );
        assert_eq!(PoolingOp::Concat.combine(&a(&[1.0]), &a(&[2.0, 3.0])).unwrap(), a(&[1.0, 2.0, 3.0]));
        assert_eq!(PoolingOp::Avg.combine(&a(&[2.0, 0.0]), &a(&[0.0, 2.0])).unwrap(), a(&[1.0, 1.0]));
    }

    #[test]
    fn length_mismatch() {
        for op in [PoolingOp::Max, PoolingOp::Sum, PoolingOp::Avg, PoolingOp::Mul] {
            assert!(op.combine(&a(&[1.0]), &a(&[1.0, 2.0])).is_err());
        }
        assert!(PoolingOp::Outer.combine(&a(&[1.0]), &a(&[1.0, 2.0])).is_ok());
    }

    #[test]
    fn names_roundtrip() {
        for op in PoolingOp::ALL {
            assert_eq!(op.name().parse::<PoolingOp>().unwrap(), op);
        }
        assert!("min".parse::<PoolingOp>().is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let u = a(&[0.3, -1.2, 0.9]);
        let v = a(&[0.5, 0.4, -0.7]);
        for op in PoolingOp::ALL {
            let dim = op.output_dim(3, 3).unwrap();
            let coef = Array1::from_vec((0..dim).map(|i| (i as f64 * 0.37).sin()).collect());
            let f = |u: &Array1, v: &Array1| -> f64 {
                op.combine(u, v).unwrap().iter().zip(coef.iter()).map(|(x, c)| x * c).sum()
            };
            let (du, dv) = op.backward(&u, &v, &coef).unwrap();
            let eps = 1e-6;
            for i in 0..3 {
                let (mut up, mut um) = (u.clone(), u.clone());
                up[i] += eps;
                um[i] -= eps;
                assert!(((f(&up, &v) - f(&um, &v)) / (2.0 * eps) - du[i]).abs() < 1e-8, "{op} du");
                let (mut vp, mut vm) = (v.clone(), v.clone());
                vp[i] += eps;
                vm[i] -= eps;
                assert!(((f(&u, &vp) - f(&u, &vm)) / (2.0 * eps) - dv[i]).abs() < 1e-8, "{op} dv");
            }
        }
    }
}

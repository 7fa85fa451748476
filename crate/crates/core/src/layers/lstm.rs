//! LSTM whose output gate reads only `x_t` and `h_{t-1}` (no peephole on the
//! cell), so all four gate pre-activations are independent of each other.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{init_uniform, matvec, sigmoid_scalar, Array1, Array2, Rng};

/// Which recurrent state is handed to the branch hidden layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LstmOutput {
    #[default]
    Final,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub w_xi: Array2,
    pub w_hi: Array2,
    pub w_xf: Array2,
    pub w_hf: Array2,
    pub w_xc: Array2,
    pub w_hc: Array2,
    pub w_xo: Array2,
    pub w_ho: Array2,
    pub b_i: Array1,
    pub b_f: Array1,
    pub b_c: Array1,
    pub b_o: Array1,
}

#[derive(Clone, Debug)]
pub struct LstmStep {
    pub h_prev: Array1,
    pub c_prev: Array1,
    pub input_gate: Array1,
    pub forget_gate: Array1,
    pub candidate: Array1,
    pub output_gate: Array1,
    pub cell: Array1,
    pub cell_tanh: Array1,
    pub hidden: Array1,
}

#[derive(Clone, Debug)]
pub struct LstmCache {
    pub steps: Vec<LstmStep>,
    pub output: LstmOutput,
}

impl LstmLayer {
    pub fn new(rng: &mut Rng, in_dim: usize, hidden: usize, scale: f64) -> Result<Self> {
        let mut mat = |cols| init_uniform(rng, hidden, cols, scale);
        Ok(Self {
            w_xi: mat(in_dim)?,
            w_hi: mat(hidden)?,
            w_xf: mat(in_dim)?,
            w_hf: mat(hidden)?,
            w_xc: mat(in_dim)?,
            w_hc: mat(hidden)?,
            w_xo: mat(in_dim)?,
            w_ho: mat(hidden)?,
            b_i: Array1::zeros(hidden),
            b_f: Array1::zeros(hidden),
            b_c: Array1::zeros(hidden),
            b_o: Array1::zeros(hidden),
        })
    }

    pub fn zeros(in_dim: usize, hidden: usize) -> Self {
        let x = || Array2::zeros(hidden, in_dim);
        let h = || Array2::zeros(hidden, hidden);
        Self {
            w_xi: x(),
            w_hi: h(),
            w_xf: x(),
            w_hf: h(),
            w_xc: x(),
            w_hc: h(),
            w_xo: x(),
            w_ho: h(),
            b_i: Array1::zeros(hidden),
            b_f: Array1::zeros(hidden),
            b_c: Array1::zeros(hidden),
            b_o: Array1::zeros(hidden),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w_xi.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_xi.rows()
    }

    fn gate(w_x: &Array2, w_h: &Array2, b: &Array1, x: &Array1, h: &Array1) -> Result<Array1> {
        let mut a = matvec(w_x, x)?;
        let ah = matvec(w_h, h)?;
        for i in 0..a.len() {
            a[i] += ah[i] + b[i];
        }
        Ok(a)
    }

    pub fn forward(&self, xs: &[Array1], output: LstmOutput) -> Result<(Array1, LstmCache)> {
        if xs.is_empty() {
            return Err(Error::arg("LSTM input sequence is empty"));
        }
        let n = self.hidden_dim();
        let mut h = Array1::zeros(n);
        let mut c = Array1::zeros(n);
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            let i = Self::gate(&self.w_xi, &self.w_hi, &self.b_i, x, &h)?.map(sigmoid_scalar);
            let f = Self::gate(&self.w_xf, &self.w_hf, &self.b_f, x, &h)?.map(sigmoid_scalar);
            let g = Self::gate(&self.w_xc, &self.w_hc, &self.b_c, x, &h)?.map(f64::tanh);
            let o = Self::gate(&self.w_xo, &self.w_ho, &self.b_o, x, &h)?.map(sigmoid_scalar);
            let cell = Array1::from_vec((0..n).map(|j| f[j] * c[j] + i[j] * g[j]).collect());
            let cell_tanh = cell.map(f64::tanh);
            let hidden = Array1::from_vec((0..n).map(|j| o[j] * cell_tanh[j]).collect());
            steps.push(LstmStep {
                h_prev: std::mem::replace(&mut h, hidden.clone()),
                c_prev: std::mem::replace(&mut c, cell.clone()),
                input_gate: i,
                forget_gate: f,
                candidate: g,
                output_gate: o,
                cell,
                cell_tanh,
                hidden,
            });
        }
        let out = match output {
            LstmOutput::Final => h,
            LstmOutput::Mean => {
                let mut m = Array1::zeros(n);
                for s in &steps {
                    m.axpy(1.0 / steps.len() as f64, &s.hidden)?;
                }
                m
            }
        };
        Ok((out, LstmCache { steps, output }))
    }

    /// Backpropagation through time. Accumulates into `grad` and returns `d x_t`.
    pub fn backward(
        &self,
        xs: &[Array1],
        cache: &LstmCache,
        dout: &Array1,
        grad: &mut LstmLayer,
    ) -> Result<Vec<Array1>> {
        let n = self.hidden_dim();
        let steps = &cache.steps;
        let len = steps.len();
        let mut dh_next = Array1::zeros(n);
        let mut dc_next = Array1::zeros(n);
        let mut dxs = vec![Array1::zeros(self.in_dim()); len];

        for t in (0..len).rev() {
            let s = &steps[t];
            let mut dh = dh_next.clone();
            match cache.output {
                LstmOutput::Final if t == len - 1 => dh.axpy(1.0, dout)?,
                LstmOutput::Final => {}
                LstmOutput::Mean => dh.axpy(1.0 / len as f64, dout)?,
            }
            let mut da_i = Array1::zeros(n);
            let mut da_f = Array1::zeros(n);
            let mut da_c = Array1::zeros(n);
            let mut da_o = Array1::zeros(n);
            for j in 0..n {
                let d_o = dh[j] * s.cell_tanh[j];
                let dc = dc_next[j] + dh[j] * s.output_gate[j] * (1.0 - s.cell_tanh[j] * s.cell_tanh[j]);
                let d_i = dc * s.candidate[j];
                let d_g = dc * s.input_gate[j];
                let d_f = dc * s.c_prev[j];
                dc_next[j] = dc * s.forget_gate[j];
                da_i[j] = d_i * s.input_gate[j] * (1.0 - s.input_gate[j]);
                da_f[j] = d_f * s.forget_gate[j] * (1.0 - s.forget_gate[j]);
                da_c[j] = d_g * (1.0 - s.candidate[j] * s.candidate[j]);
                da_o[j] = d_o * s.output_gate[j] * (1.0 - s.output_gate[j]);
            }

            let x = xs[t].as_slice();
            let hp = s.h_prev.as_slice();
            let mut dx = Array1::zeros(self.in_dim());
            let mut dhp = Array1::zeros(n);
            for (da, w_x, w_h, gw_x, gw_h, gb) in [
                (&da_i, &self.w_xi, &self.w_hi, &mut grad.w_xi, &mut grad.w_hi, &mut grad.b_i),
                (&da_f, &self.w_xf, &self.w_hf, &mut grad.w_xf, &mut grad.w_hf, &mut grad.b_f),
                (&da_c, &self.w_xc, &self.w_hc, &mut grad.w_xc, &mut grad.w_hc, &mut grad.b_c),
                (&da_o, &self.w_xo, &self.w_ho, &mut grad.w_xo, &mut grad.w_ho, &mut grad.b_o),
            ] {
                gw_x.add_outer(1.0, da.as_slice(), x)?;
                gw_h.add_outer(1.0, da.as_slice(), hp)?;
                gb.axpy(1.0, da)?;
                dx.axpy(1.0, &w_x.matvec_t(da)?)?;
                dhp.axpy(1.0, &w_h.matvec_t(da)?)?;
            }
            dxs[t] = dx;
            dh_next = dhp;
        }
        Ok(dxs)
    }
}

use rand::Rng;

use super::dense::sigmoid;
use super::params::{GradientSet, ParamId, ParameterSet};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

/// One LSTM layer. Gate blocks are stacked in the order input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub hidden: usize,
}

/// Recorded activations of one layer over a sequence.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    xs: Matrix,
    /// Row 0 is the zero initial state; row t+1 is the state after step t.
    hs: Matrix,
    cs: Matrix,
    /// Activated gates, `4 * hidden` per step.
    gates: Matrix,
    tanh_c: Matrix,
}

impl LstmTrace {
    pub fn len(&self) -> usize {
        self.xs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.rows() == 0
    }

    /// Hidden state after step `t`.
    pub fn hidden(&self, t: usize) -> &[f64] {
        self.hs.row(t + 1)
    }

    /// Hidden states of every step as an `m x hidden` matrix.
    pub fn hidden_states(&self) -> Matrix {
        let h = self.hs.cols();
        let m = self.len();
        Matrix::from_vec(m, h, self.hs.as_slice()[h..].to_vec()).expect("consistent shape")
    }
}

impl LstmLayer {
    pub fn register<R: Rng + ?Sized>(
        ps: &mut ParameterSet,
        name: &str,
        inputs: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / ((inputs + hidden) as f64).sqrt();
        let w_input = ps.add_uniform(format!("{name}.w_input"), 4 * hidden, inputs, bound, rng);
        let w_hidden = ps.add_uniform(format!("{name}.w_hidden"), 4 * hidden, hidden, bound, rng);
        let bias = ps.add_zeros(format!("{name}.bias"), 4 * hidden, 1);
        LstmLayer {
            w_input,
            w_hidden,
            bias,
            inputs,
            hidden,
        }
    }

    /// Runs the recurrence from a zero hidden and cell state.
    pub fn forward(&self, ps: &ParameterSet, xs: &Matrix) -> Result<LstmTrace> {
        if xs.rows() == 0 {
            return Err(Error::Shape("LSTM input sequence is empty".into()));
        }
        if xs.cols() != self.inputs {
            return Err(Error::Shape(format!(
                "LSTM expects {} features per step, got {}",
                self.inputs,
                xs.cols()
            )));
        }
        let (m, h) = (xs.rows(), self.hidden);
        let wi = ps.get(self.w_input);
        let wh = ps.get(self.w_hidden);
        let b = ps.get(self.bias);
        let mut hs = Matrix::zeros(m + 1, h);
        let mut cs = Matrix::zeros(m + 1, h);
        let mut gates = Matrix::zeros(m, 4 * h);
        let mut tanh_c = Matrix::zeros(m, h);
        let mut z = vec![0.0; 4 * h];
        for t in 0..m {
            let x = xs.row(t);
            {
                let h_prev = hs.row(t);
                for (k, zk) in z.iter_mut().enumerate() {
                    *zk = b[k]
                        + dot(&wi[k * self.inputs..(k + 1) * self.inputs], x)
                        + dot(&wh[k * h..(k + 1) * h], h_prev);
                }
            }
            let g_row = gates.row_mut(t);
            for k in 0..h {
                g_row[k] = sigmoid(z[k]);
                g_row[h + k] = sigmoid(z[h + k]);
                g_row[2 * h + k] = z[2 * h + k].tanh();
                g_row[3 * h + k] = sigmoid(z[3 * h + k]);
            }
            for k in 0..h {
                let (i, f, g, o) = (g_row[k], g_row[h + k], g_row[2 * h + k], g_row[3 * h + k]);
                let c = f * cs[(t, k)] + i * g;
                let tc = c.tanh();
                cs[(t + 1, k)] = c;
                tanh_c[(t, k)] = tc;
                hs[(t + 1, k)] = o * tc;
            }
        }
        Ok(LstmTrace {
            xs: xs.clone(),
            hs,
            cs,
            gates,
            tanh_c,
        })
    }

    /// Backpropagation through time. `d_hidden` holds the loss gradient with
    /// respect to each step's hidden output (`m x hidden`). Returns the
    /// gradient with respect to the inputs (`m x inputs`).
    pub fn backward(
        &self,
        ps: &ParameterSet,
        trace: &LstmTrace,
        d_hidden: &Matrix,
        grads: &mut GradientSet,
    ) -> Result<Matrix> {
        let (m, h) = (trace.len(), self.hidden);
        if d_hidden.rows() != m || d_hidden.cols() != h || trace.hs.cols() != h {
            return Err(Error::Shape(format!(
                "LSTM backward got a {}x{} gradient for a {m}-step, {h}-unit trace",
                d_hidden.rows(),
                d_hidden.cols()
            )));
        }
        let n_in = self.inputs;
        let wi = ps.get(self.w_input);
        let wh = ps.get(self.w_hidden);
        let mut g_wi = grads.take(self.w_input);
        let mut g_wh = grads.take(self.w_hidden);
        let mut g_b = grads.take(self.bias);

        let mut dx = Matrix::zeros(m, n_in);
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..m).rev() {
            let g_row = trace.gates.row(t);
            for k in 0..h {
                let (i, f, g, o) = (g_row[k], g_row[h + k], g_row[2 * h + k], g_row[3 * h + k]);
                let tc = trace.tanh_c[(t, k)];
                let dh = d_hidden[(t, k)] + dh_next[k];
                let d_o = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
                let d_f = dc * trace.cs[(t, k)];
                let d_i = dc * g;
                let d_g = dc * i;
                dc_next[k] = dc * f;
                dz[k] = d_i * i * (1.0 - i);
                dz[h + k] = d_f * f * (1.0 - f);
                dz[2 * h + k] = d_g * (1.0 - g * g);
                dz[3 * h + k] = d_o * o * (1.0 - o);
            }
            let x = trace.xs.row(t);
            let h_prev = trace.hs.row(t);
            dh_next.fill(0.0);
            let dx_row = dx.row_mut(t);
            for (k, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g_b[k] += d;
                let wi_row = &wi[k * n_in..(k + 1) * n_in];
                let gwi_row = &mut g_wi[k * n_in..(k + 1) * n_in];
                for j in 0..n_in {
                    gwi_row[j] += d * x[j];
                    dx_row[j] += d * wi_row[j];
                }
                let wh_row = &wh[k * h..(k + 1) * h];
                let gwh_row = &mut g_wh[k * h..(k + 1) * h];
                for j in 0..h {
                    gwh_row[j] += d * h_prev[j];
                    dh_next[j] += d * wh_row[j];
                }
            }
        }
        grads.restore(self.w_input, g_wi);
        grads.restore(self.w_hidden, g_wh);
        grads.restore(self.bias, g_b);
        Ok(dx)
    }
}

/// Stacked LSTM layers; each layer consumes the hidden sequence of the one below.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStack {
    layers: Vec<LstmLayer>,
}

#[derive(Debug, Clone)]
pub struct LstmStackTrace {
    layers: Vec<LstmTrace>,
}

impl LstmStackTrace {
    pub fn top(&self) -> &LstmTrace {
        self.layers.last().expect("non-empty stack")
    }

    /// Final hidden state of the top layer.
    pub fn final_hidden(&self) -> &[f64] {
        let top = self.top();
        top.hidden(top.len() - 1)
    }
}

impl LstmStack {
    pub fn register<R: Rng + ?Sized>(
        ps: &mut ParameterSet,
        name: &str,
        inputs: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        assert!(!hidden.is_empty(), "an LSTM stack needs at least one layer");
        let mut layers = Vec::with_capacity(hidden.len());
        let mut n_in = inputs;
        for (l, &h) in hidden.iter().enumerate() {
            layers.push(LstmLayer::register(ps, &format!("{name}.{l}"), n_in, h, rng));
            n_in = h;
        }
        LstmStack { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.hidden)
    }

    pub fn layers(&self) -> &[LstmLayer] {
        &self.layers
    }

    pub fn forward(&self, ps: &ParameterSet, xs: &Matrix) -> Result<LstmStackTrace> {
        let mut traces: Vec<LstmTrace> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let trace = match traces.last() {
                None => layer.forward(ps, xs)?,
                Some(prev) => layer.forward(ps, &prev.hidden_states())?,
            };
            traces.push(trace);
        }
        Ok(LstmStackTrace { layers: traces })
    }

    /// `d_top` is the gradient with respect to the top layer's hidden sequence.
    pub fn backward(
        &self,
        ps: &ParameterSet,
        trace: &LstmStackTrace,
        d_top: &Matrix,
        grads: &mut GradientSet,
    ) -> Result<Matrix> {
        if trace.layers.len() != self.layers.len() {
            return Err(Error::Shape("trace was recorded by a different stack".into()));
        }
        let mut d = d_top.clone();
        for (layer, t) in self.layers.iter().zip(&trace.layers).rev() {
            d = layer.backward(ps, t, &d, grads)?;
        }
        Ok(d)
    }
}

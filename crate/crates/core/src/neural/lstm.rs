use ndarray::{s, Array1, Array2, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};

/// Input weights, recurrent weights and bias of one gate.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    /// N×K
    pub w_x: Array2<f64>,
    /// N×N
    pub w_h: Array2<f64>,
    pub b: Array1<f64>,
}

impl Gate {
    fn zeros(input_dim: usize, hidden: usize) -> Self {
        Gate {
            w_x: Array2::zeros((hidden, input_dim)),
            w_h: Array2::zeros((hidden, hidden)),
            b: Array1::zeros(hidden),
        }
    }

    fn pre_activation(&self, x: &ArrayView1<f64>, h: &ArrayView1<f64>) -> Array1<f64> {
        self.w_x.dot(x) + self.w_h.dot(h) + &self.b
    }
}

/// Parameters of one LSTM layer with `hidden` units reading `input_dim`
/// inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub input: Gate,
    pub forget: Gate,
    pub output: Gate,
    /// Input modulation (candidate cell) gate.
    pub cell: Gate,
}

impl LstmLayerParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmLayerParams {
            input: Gate::zeros(input_dim, hidden),
            forget: Gate::zeros(input_dim, hidden),
            output: Gate::zeros(input_dim, hidden),
            cell: Gate::zeros(input_dim, hidden),
        }
    }

    /// Weights uniform in `[-scale, scale]`, biases zero except the forget
    /// gate's, which start at `forget_bias`.
    pub fn random<R: Rng>(
        input_dim: usize,
        hidden: usize,
        scale: f64,
        forget_bias: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(input_dim, hidden);
        for gate in p.gates_mut() {
            gate.w_x.mapv_inplace(|_| rng.random_range(-scale..=scale));
            gate.w_h.mapv_inplace(|_| rng.random_range(-scale..=scale));
        }
        p.forget.b.fill(forget_bias);
        p
    }

    pub fn input_dim(&self) -> usize {
        self.input.w_x.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.input.w_x.nrows()
    }

    pub fn gates(&self) -> [&Gate; 4] {
        [&self.input, &self.forget, &self.output, &self.cell]
    }

    pub fn gates_mut(&mut self) -> [&mut Gate; 4] {
        [
            &mut self.input,
            &mut self.forget,
            &mut self.output,
            &mut self.cell,
        ]
    }

    pub fn check(&self) -> Result<()> {
        let (n, k) = (self.hidden(), self.input_dim());
        for g in self.gates() {
            if g.w_x.dim() != (n, k) {
                return Err(Error::dimension("lstm input weights", n * k, g.w_x.len()));
            }
            if g.w_h.dim() != (n, n) {
                return Err(Error::dimension("lstm recurrent weights", n * n, g.w_h.len()));
            }
            if g.b.len() != n {
                return Err(Error::dimension("lstm bias", n, g.b.len()));
            }
        }
        Ok(())
    }
}

/// Hidden output and memory cell of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

impl LayerState {
    pub fn zeros(hidden: usize) -> Self {
        LayerState {
            h: Array1::zeros(hidden),
            c: Array1::zeros(hidden),
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM update:
///
/// ```text
/// i = σ(W_xi x + W_hi h + b_i)    f = σ(W_xf x + W_hf h + b_f)
/// o = σ(W_xo x + W_ho h + b_o)    g = tanh(W_xc x + W_hc h + b_c)
/// c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
/// ```
pub fn lstm_step(
    p: &LstmLayerParams,
    x: &Array1<f64>,
    h_prev: &Array1<f64>,
    c_prev: &Array1<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let (n, k) = (p.hidden(), p.input_dim());
    if x.len() != k {
        return Err(Error::dimension("lstm input", k, x.len()));
    }
    if h_prev.len() != n {
        return Err(Error::dimension("lstm hidden state", n, h_prev.len()));
    }
    if c_prev.len() != n {
        return Err(Error::dimension("lstm cell state", n, c_prev.len()));
    }
    if !x.iter().chain(h_prev).chain(c_prev).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("lstm step inputs".into()));
    }
    let cache = forward(p, x.view(), h_prev.view(), c_prev.view());
    Ok((cache.h, cache.c))
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub x: Array1<f64>,
    pub h_prev: Array1<f64>,
    pub c_prev: Array1<f64>,
    pub i: Array1<f64>,
    pub f: Array1<f64>,
    pub o: Array1<f64>,
    pub g: Array1<f64>,
    pub c: Array1<f64>,
    pub tanh_c: Array1<f64>,
    pub h: Array1<f64>,
}

pub(crate) fn forward(
    p: &LstmLayerParams,
    x: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
) -> StepCache {
    let i = p.input.pre_activation(&x, &h_prev).mapv_into(sigmoid);
    let f = p.forget.pre_activation(&x, &h_prev).mapv_into(sigmoid);
    let o = p.output.pre_activation(&x, &h_prev).mapv_into(sigmoid);
    let g = p.cell.pre_activation(&x, &h_prev).mapv_into(f64::tanh);
    let c = &f * &c_prev + &i * &g;
    let tanh_c = c.mapv(f64::tanh);
    let h = &o * &tanh_c;
    StepCache {
        x: x.to_owned(),
        h_prev: h_prev.to_owned(),
        c_prev: c_prev.to_owned(),
        i,
        f,
        o,
        g,
        c,
        tanh_c,
        h,
    }
}

pub(crate) fn accumulate_outer(acc: &mut Array2<f64>, col: &Array1<f64>, row: &Array1<f64>) {
    for (mut acc_row, &scale) in acc.rows_mut().into_iter().zip(col) {
        acc_row.scaled_add(scale, row);
    }
}

/// Back-propagates through one step. `dh` is the total gradient reaching
/// `h'` and `dc_next` the gradient reaching `c'` from the following step.
/// Parameter gradients are added into `grads`; returns `(dx, dh_prev,
/// dc_prev)`.
pub(crate) fn backward(
    p: &LstmLayerParams,
    cache: &StepCache,
    dh: &Array1<f64>,
    dc_next: &Array1<f64>,
    grads: &mut LstmLayerParams,
) -> (Array1<f64>, Array1<f64>, Array1<f64>) {
    let d_o = dh * &cache.tanh_c;
    let dc = dh * &cache.o * &cache.tanh_c.mapv(|t| 1.0 - t * t) + dc_next;
    let d_i = &dc * &cache.g;
    let d_g = &dc * &cache.i;
    let d_f = &dc * &cache.c_prev;
    let dc_prev = &dc * &cache.f;

    let da_i = d_i * &cache.i.mapv(|v| v * (1.0 - v));
    let da_f = d_f * &cache.f.mapv(|v| v * (1.0 - v));
    let da_o = d_o * &cache.o.mapv(|v| v * (1.0 - v));
    let da_g = d_g * &cache.g.mapv(|v| 1.0 - v * v);

    let mut dx = Array1::zeros(cache.x.len());
    let mut dh_prev = Array1::zeros(cache.h_prev.len());
    let pairs = [
        (&p.input, &mut grads.input, &da_i),
        (&p.forget, &mut grads.forget, &da_f),
        (&p.output, &mut grads.output, &da_o),
        (&p.cell, &mut grads.cell, &da_g),
    ];
    for (gate, grad, da) in pairs {
        accumulate_outer(&mut grad.w_x, da, &cache.x);
        accumulate_outer(&mut grad.w_h, da, &cache.h_prev);
        grad.b += da;
        dx += &gate.w_x.t().dot(da);
        dh_prev += &gate.w_h.t().dot(da);
    }
    (dx, dh_prev, dc_prev)
}

/// Splits a layer-2 input gradient into its recurrent-input and
/// conditioning parts.
pub(crate) fn split_input_grad(dx: &Array1<f64>, hidden: usize) -> Array1<f64> {
    dx.slice(s![..hidden]).to_owned()
}

use std::borrow::Cow;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{check_cols, fill_uniform, glorot_bound, sigmoid, tanh, Parameters};
use crate::error::{Error, Result};

/// Gate blocks are stacked along the rows of `w`, `u` and `b` in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Candidate = 3,
}

/// LSTM cell without peepholes:
///
/// ```text
/// i = σ(W_i x + U_i h + b_i)    f = σ(W_f x + U_f h + b_f)
/// o = σ(W_o x + U_o h + b_o)    g = tanh(W_c x + U_c h + b_c)
/// c' = f ⊙ c + i ⊙ g            h' = o ⊙ tanh(c')
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    /// `[4H, D]` input weights.
    pub w: Array2<f64>,
    /// `[4H, H]` recurrent weights.
    pub u: Array2<f64>,
    /// `[1, 4H]` biases.
    pub b: Array2<f64>,
}

/// Hidden output and cell state for a batch, one row per sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Array2<f64>,
    pub c: Array2<f64>,
}

impl LstmState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        Self {
            h: Array2::zeros((batch, hidden)),
            c: Array2::zeros((batch, hidden)),
        }
    }

    pub fn batch(&self) -> usize {
        self.h.nrows()
    }
}

/// Intermediate values of one step, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub x: Array2<f64>,
    pub h_prev: Array2<f64>,
    pub c_prev: Array2<f64>,
    /// Activated gates `[i, f, o, g]`, shape `[batch, 4H]`.
    pub gates: Array2<f64>,
    pub tanh_c: Array2<f64>,
}

impl Lstm {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            w: Array2::zeros((4 * hidden, inputs)),
            u: Array2::zeros((4 * hidden, hidden)),
            b: Array2::zeros((1, 4 * hidden)),
        }
    }

    /// Glorot-uniform per gate block, zero biases except the forget gate at 1.
    pub fn init(inputs: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut cell = Self::zeros(inputs, hidden);
        fill_uniform(&mut cell.w, glorot_bound(inputs, hidden), rng);
        fill_uniform(&mut cell.u, glorot_bound(hidden, hidden), rng);
        cell.gate_bias_mut(Gate::Forget).fill(1.0);
        cell
    }

    pub fn inputs(&self) -> usize {
        self.w.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.u.ncols()
    }

    pub fn gate_bias(&self, gate: Gate) -> ndarray::ArrayView1<'_, f64> {
        let h = self.hidden();
        let g = gate as usize;
        self.b.slice(s![0, g * h..(g + 1) * h])
    }

    pub fn gate_bias_mut(&mut self, gate: Gate) -> ndarray::ArrayViewMut1<'_, f64> {
        let h = self.hidden();
        let g = gate as usize;
        self.b.slice_mut(s![0, g * h..(g + 1) * h])
    }

    fn check_state(&self, x: &Array2<f64>, state: &LstmState) -> Result<()> {
        check_cols("lstm", x, self.inputs())?;
        let h = self.hidden();
        if state.h.dim() != (x.nrows(), h) || state.c.dim() != (x.nrows(), h) {
            return Err(Error::Shape(format!(
                "lstm state {:?}/{:?} for batch {} and hidden size {h}",
                state.h.dim(),
                state.c.dim(),
                x.nrows()
            )));
        }
        Ok(())
    }

    /// One step for a batch `x` of shape `[batch, D]`.
    pub fn step(&self, x: &Array2<f64>, state: &LstmState) -> Result<(LstmState, LstmCache)> {
        self.check_state(x, state)?;
        let gates = self.gates(x.view(), state);
        let (next, tanh_c) = self.combine_state(&gates, &state.c);
        let cache = LstmCache {
            x: x.clone(),
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            gates,
            tanh_c,
        };
        Ok((next, cache))
    }

    /// One step without keeping a cache.
    pub fn advance(&self, x: &Array2<f64>, state: &LstmState) -> Result<LstmState> {
        self.check_state(x, state)?;
        let gates = self.gates(x.view(), state);
        Ok(self.combine_state(&gates, &state.c).0)
    }

    fn gates(&self, x: ArrayView2<f64>, state: &LstmState) -> Array2<f64> {
        let hidden = self.hidden();
        let mut z = self
            .b
            .broadcast((x.nrows(), 4 * hidden))
            .expect("bias broadcasts")
            .to_owned();
        general_mat_mul(1.0, &x, &self.w.t(), 1.0, &mut z);
        general_mat_mul(1.0, &state.h, &self.u.t(), 1.0, &mut z);
        activate(z.as_slice_mut().expect("fresh array"), hidden);
        z
    }

    fn combine_state(&self, gates: &Array2<f64>, c_prev: &Array2<f64>) -> (LstmState, Array2<f64>) {
        let hidden = self.hidden();
        let dim = (gates.nrows(), hidden);
        let (mut h, mut c, mut tanh_c) = (Array2::zeros(dim), Array2::zeros(dim), Array2::zeros(dim));
        combine(
            gates.as_slice().expect("fresh array"),
            &flat(c_prev),
            h.as_slice_mut().expect("fresh array"),
            c.as_slice_mut().expect("fresh array"),
            tanh_c.as_slice_mut().expect("fresh array"),
            hidden,
        );
        (LstmState { h, c }, tanh_c)
    }

    /// Backpropagates one step. `dh` is the total gradient reaching this
    /// step's hidden output and `dc` the gradient reaching its cell state from
    /// later steps. Accumulates into `grad` and returns the gradients for the
    /// previous `(h, c)`.
    pub fn step_backward(
        &self,
        cache: &LstmCache,
        dh: &Array2<f64>,
        dc: &Array2<f64>,
        grad: &mut Lstm,
    ) -> (Array2<f64>, Array2<f64>) {
        let hidden = self.hidden();
        let batch = dh.nrows();
        let mut dz = Array2::zeros((batch, 4 * hidden));
        let mut dc_prev = Array2::zeros((batch, hidden));
        gate_gradients(
            cache.gates.as_slice().expect("cache arrays are standard"),
            cache.tanh_c.as_slice().expect("cache arrays are standard"),
            &flat(&cache.c_prev),
            &flat(dh),
            &flat(dc),
            dz.as_slice_mut().expect("fresh array"),
            dc_prev.as_slice_mut().expect("fresh array"),
            hidden,
        );
        general_mat_mul(1.0, &dz.t(), &cache.x, 1.0, &mut grad.w);
        general_mat_mul(1.0, &dz.t(), &cache.h_prev, 1.0, &mut grad.u);
        grad.b += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));
        (dz.dot(&self.u), dc_prev)
    }

    /// Runs the cell from the zero state over `steps` inputs stacked
    /// step-major in `xs` (`[steps * batch, D]`, rows `t*batch..(t+1)*batch`
    /// hold step `t`).
    pub fn forward_sequence(&self, xs: &Array2<f64>, batch: usize) -> Result<LstmTrace> {
        check_cols("lstm", xs, self.inputs())?;
        if batch == 0 || xs.nrows() % batch != 0 {
            return Err(Error::Shape(format!(
                "lstm: {} stacked rows is not a multiple of batch {batch}",
                xs.nrows()
            )));
        }
        let hidden = self.hidden();
        let rows = xs.nrows();
        let steps = rows / batch;
        let mut gates = self.input_projection(xs);
        let ut = self.u.t().as_standard_layout().into_owned();
        let mut h = Array2::<f64>::zeros((rows, hidden));
        let mut c = Array2::<f64>::zeros((rows, hidden));
        let mut tanh_c = Array2::<f64>::zeros((rows, hidden));
        let zero_c = vec![0.0; batch * hidden];
        for t in 0..steps {
            let (now, prev) = (t * batch..(t + 1) * batch, t.saturating_sub(1) * batch..t * batch);
            if t > 0 {
                let h_prev = h.slice(s![prev, ..]);
                let mut z = gates.slice_mut(s![now.clone(), ..]);
                general_mat_mul(1.0, &h_prev, &ut, 1.0, &mut z);
            }
            let g_rows = 4 * hidden * batch;
            let g = &mut gates.as_slice_mut().expect("fresh array")[t * g_rows..(t + 1) * g_rows];
            activate(g, hidden);
            let h_rows = hidden * batch;
            let span = t * h_rows..(t + 1) * h_rows;
            let c_all = c.as_slice_mut().expect("fresh array");
            let (c_done, c_rest) = c_all.split_at_mut(t * h_rows);
            let c_prev = if t == 0 { &zero_c[..] } else { &c_done[(t - 1) * h_rows..] };
            combine(
                g,
                c_prev,
                &mut h.as_slice_mut().expect("fresh array")[span.clone()],
                &mut c_rest[..h_rows],
                &mut tanh_c.as_slice_mut().expect("fresh array")[span],
                hidden,
            );
        }
        Ok(LstmTrace {
            batch,
            x: xs.clone(),
            gates,
            c,
            tanh_c,
            h,
        })
    }

    /// `x W^T + b` for every row, skipping zero inputs; the inputs are
    /// usually one-hot.
    fn input_projection(&self, xs: &Array2<f64>) -> Array2<f64> {
        let width = 4 * self.hidden();
        let w_t = self.w.t().as_standard_layout().into_owned();
        let mut z = Array2::<f64>::zeros((xs.nrows(), width));
        let bias = self.b.row(0);
        for (mut row, x) in z.rows_mut().into_iter().zip(xs.rows()) {
            row.assign(&bias);
            for (k, &xk) in x.iter().enumerate() {
                if xk != 0.0 {
                    row.scaled_add(xk, &w_t.row(k));
                }
            }
        }
        z
    }

    /// BPTT over a trace from [`Lstm::forward_sequence`]. `dh_out` holds the
    /// loss gradient with respect to every step's hidden output, stacked like
    /// the trace. Accumulates into `grad`.
    pub fn backward_sequence(&self, trace: &LstmTrace, dh_out: &Array2<f64>, grad: &mut Lstm) {
        let hidden = self.hidden();
        let batch = trace.batch;
        let steps = trace.steps();
        let h_rows = batch * hidden;
        let g_rows = batch * 4 * hidden;
        let dh_out = dh_out.as_standard_layout();
        let dh_out = dh_out.as_slice().expect("standard layout");
        let gates = trace.gates.as_slice().expect("fresh array");
        let tanh_c = trace.tanh_c.as_slice().expect("fresh array");
        let c = trace.c.as_slice().expect("fresh array");
        let zero_c = vec![0.0; h_rows];
        let mut dz = Array2::<f64>::zeros((steps * batch, 4 * hidden));
        let mut dh_next = Array2::<f64>::zeros((batch, hidden));
        let mut dc_next = vec![0.0; h_rows];
        let mut dc_prev = vec![0.0; h_rows];
        let mut dh = vec![0.0; h_rows];
        for t in (0..steps).rev() {
            let span = t * h_rows..(t + 1) * h_rows;
            for ((d, a), b) in dh.iter_mut().zip(&dh_out[span.clone()]).zip(dh_next.iter()) {
                *d = a + b;
            }
            let c_prev = if t == 0 { &zero_c[..] } else { &c[(t - 1) * h_rows..t * h_rows] };
            gate_gradients(
                &gates[t * g_rows..(t + 1) * g_rows],
                &tanh_c[span],
                c_prev,
                &dh,
                &dc_next,
                &mut dz.as_slice_mut().expect("fresh array")[t * g_rows..(t + 1) * g_rows],
                &mut dc_prev,
                hidden,
            );
            std::mem::swap(&mut dc_next, &mut dc_prev);
            if t > 0 {
                let dz_t = dz.slice(s![t * batch..(t + 1) * batch, ..]);
                general_mat_mul(1.0, &dz_t, &self.u, 0.0, &mut dh_next);
            }
        }
        let mut dw_t = Array2::<f64>::zeros((self.inputs(), 4 * hidden));
        for (x, d) in trace.x.rows().into_iter().zip(dz.rows()) {
            for (k, &xk) in x.iter().enumerate() {
                if xk != 0.0 {
                    dw_t.row_mut(k).scaled_add(xk, &d);
                }
            }
        }
        grad.w += &dw_t.t();
        if steps > 1 {
            let dz_late = dz.slice(s![batch.., ..]);
            let h_early = trace.h.slice(s![..(steps - 1) * batch, ..]);
            general_mat_mul(1.0, &dz_late.t(), &h_early, 1.0, &mut grad.u);
        }
        grad.b += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
}

/// Everything [`Lstm::backward_sequence`] needs from a forward run.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    batch: usize,
    x: Array2<f64>,
    gates: Array2<f64>,
    c: Array2<f64>,
    tanh_c: Array2<f64>,
    h: Array2<f64>,
}

impl LstmTrace {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn steps(&self) -> usize {
        self.h.nrows() / self.batch
    }

    /// Hidden outputs of every step, `[steps * batch, H]`, step-major.
    pub fn hidden_outputs(&self) -> &Array2<f64> {
        &self.h
    }

    /// State after the last step.
    pub fn final_state(&self) -> LstmState {
        let from = (self.steps() - 1) * self.batch;
        LstmState {
            h: self.h.slice(s![from.., ..]).to_owned(),
            c: self.c.slice(s![from.., ..]).to_owned(),
        }
    }
}

/// Row-major contents, copied only when the layout requires it.
fn flat(a: &Array2<f64>) -> Cow<'_, [f64]> {
    match a.as_slice() {
        Some(v) => Cow::Borrowed(v),
        None => Cow::Owned(a.iter().copied().collect()),
    }
}

/// Gate activations in place on `[rows, 4H]` pre-activations.
fn activate(z: &mut [f64], hidden: usize) {
    for row in z.chunks_exact_mut(4 * hidden) {
        let (sig, cand) = row.split_at_mut(3 * hidden);
        sig.iter_mut().for_each(|v| *v = sigmoid(*v));
        cand.iter_mut().for_each(|v| *v = tanh(*v));
    }
}

/// `c' = f c + i g`, `h' = o tanh(c')` over row-major batches.
fn combine(gates: &[f64], c_prev: &[f64], h: &mut [f64], c: &mut [f64], tanh_c: &mut [f64], hidden: usize) {
    let rows = gates
        .chunks_exact(4 * hidden)
        .zip(c_prev.chunks_exact(hidden))
        .zip(h.chunks_exact_mut(hidden))
        .zip(c.chunks_exact_mut(hidden))
        .zip(tanh_c.chunks_exact_mut(hidden));
    for ((((g, cp), h), c), tc) in rows {
        let (i, rest) = g.split_at(hidden);
        let (f, rest) = rest.split_at(hidden);
        let (o, cand) = rest.split_at(hidden);
        for j in 0..hidden {
            let cj = f[j] * cp[j] + i[j] * cand[j];
            let tj = tanh(cj);
            c[j] = cj;
            tc[j] = tj;
            h[j] = o[j] * tj;
        }
    }
}

/// Gradients of the gate pre-activations and of the previous cell state.
#[allow(clippy::too_many_arguments)]
fn gate_gradients(
    gates: &[f64],
    tanh_c: &[f64],
    c_prev: &[f64],
    dh: &[f64],
    dc: &[f64],
    dz: &mut [f64],
    dc_prev: &mut [f64],
    hidden: usize,
) {
    let rows = gates
        .chunks_exact(4 * hidden)
        .zip(tanh_c.chunks_exact(hidden))
        .zip(c_prev.chunks_exact(hidden))
        .zip(dh.chunks_exact(hidden))
        .zip(dc.chunks_exact(hidden))
        .zip(dz.chunks_exact_mut(4 * hidden))
        .zip(dc_prev.chunks_exact_mut(hidden));
    for ((((((g, tc), cp), dh), dc), dz), dcp) in rows {
        let (i, rest) = g.split_at(hidden);
        let (f, rest) = rest.split_at(hidden);
        let (o, cand) = rest.split_at(hidden);
        let (dz_i, rest) = dz.split_at_mut(hidden);
        let (dz_f, rest) = rest.split_at_mut(hidden);
        let (dz_o, dz_g) = rest.split_at_mut(hidden);
        for j in 0..hidden {
            let dcj = dh[j] * o[j] * (1.0 - tc[j] * tc[j]) + dc[j];
            dz_i[j] = dcj * cand[j] * i[j] * (1.0 - i[j]);
            dz_f[j] = dcj * cp[j] * f[j] * (1.0 - f[j]);
            dz_o[j] = dh[j] * tc[j] * o[j] * (1.0 - o[j]);
            dz_g[j] = dcj * i[j] * (1.0 - cand[j] * cand[j]);
            dcp[j] = dcj * f[j];
        }
    }
}

impl Parameters for Lstm {
    fn blocks(&self) -> Vec<(String, &Array2<f64>)> {
        vec![
            ("w".into(), &self.w),
            ("u".into(), &self.u),
            ("b".into(), &self.b),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![&mut self.w, &mut self.u, &mut self.b]
    }
}

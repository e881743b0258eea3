//! LSTM and Gaussian-gated LSTM cell dynamics: full-sequence forward with
//! activation caching, exact backpropagation through time for every
//! parameter (including the gate's mu and sigma), and threshold-skipped
//! inference.
//!
//! Cell update, per step n with input x and previous state (c, h):
//!
//! ```text
//! i = sig(x W_xi + h W_hi + b_i)        f = sig(x W_xf + h W_hf + b_f)
//! ct = f (.) c + i (.) act(x W_xg + h W_hg + b_g)
//! o = sig(x W_xo + h W_ho + b_o)        ht = o (.) tanh(ct)
//! c' = k (.) ct + (1 - k) (.) c         h' = k (.) ht + (1 - k) (.) h
//! ```
//!
//! where `k` is the per-unit Gaussian time gate evaluated at t_n and `act`
//! is sigmoid by default (`candidate_tanh` switches it to tanh). A plain
//! LSTM is the `k == 1` special case.

use crate::math::{add_outer, mat_vec, mat_vec_add, sigmoid, vec_mat, Matrix};
use crate::timegate::{gate_grad, gate_value, gate_value_into, GateParams, TimeAxis};

/// The eight kernel matrices and four bias vectors of one LSTM layer.
/// Input kernels are D x H, recurrent kernels H x H, biases length H.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_xi: Matrix,
    pub w_hi: Matrix,
    pub b_i: Vec<f64>,
    pub w_xf: Matrix,
    pub w_hf: Matrix,
    pub b_f: Vec<f64>,
    pub w_xg: Matrix,
    pub w_hg: Matrix,
    pub b_g: Vec<f64>,
    pub w_xo: Matrix,
    pub w_ho: Matrix,
    pub b_o: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmParams {
            w_xi: Matrix::zeros(input_dim, hidden),
            w_hi: Matrix::zeros(hidden, hidden),
            b_i: vec![0.0; hidden],
            w_xf: Matrix::zeros(input_dim, hidden),
            w_hf: Matrix::zeros(hidden, hidden),
            b_f: vec![0.0; hidden],
            w_xg: Matrix::zeros(input_dim, hidden),
            w_hg: Matrix::zeros(hidden, hidden),
            b_g: vec![0.0; hidden],
            w_xo: Matrix::zeros(input_dim, hidden),
            w_ho: Matrix::zeros(hidden, hidden),
            b_o: vec![0.0; hidden],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_xi.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_xi.cols()
    }
}

/// Affine readout applied to the final hidden state.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputHead {
    pub w_out: Matrix, // H x C
    pub b_out: Vec<f64>,
}

impl OutputHead {
    pub fn zeros(hidden: usize, out_dim: usize) -> Self {
        OutputHead {
            w_out: Matrix::zeros(hidden, out_dim),
            b_out: vec![0.0; out_dim],
        }
    }

    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        let mut y = vec_mat(h, &self.w_out);
        for (yc, bc) in y.iter_mut().zip(&self.b_out) {
            *yc += bc;
        }
        y
    }
}

/// Cell and hidden state; the initial state is all zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl CellState {
    pub fn zeros(hidden: usize) -> Self {
        CellState {
            c: vec![0.0; hidden],
            h: vec![0.0; hidden],
        }
    }
}

/// Gate activations produced by one cell step.
#[derive(Clone, Debug)]
pub struct StepGates {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    /// Candidate activation (sigmoid or tanh of the g pre-activation).
    pub z: Vec<f64>,
}

/// Everything one step of the forward pass produces, cached for exact BPTT.
#[derive(Clone, Debug)]
pub struct TraceStep {
    pub t: f64,
    pub x: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub z: Vec<f64>,
    pub c_tilde: Vec<f64>,
    pub h_tilde: Vec<f64>,
    pub k: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

/// Per-timestep activation cache for one sequence.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub steps: Vec<TraceStep>,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_h(&self) -> &[f64] {
        &self.steps.last().expect("trace is nonempty").h
    }
}

/// Gradient slots; the containers mirror the parameter containers so slot
/// enumeration pairs them positionally.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub params: LstmParams,
    pub head: OutputHead,
    pub d_mu: Vec<f64>,
    pub d_sigma: Vec<f64>,
}

/// Result of a full backward pass.
#[derive(Clone, Debug)]
pub struct BackwardResult {
    pub grads: Gradients,
    /// dL/dx_n per step.
    pub d_inputs: Vec<Vec<f64>>,
    /// dL/dh_n per step (the hidden-state adjoint entering step n).
    pub d_hidden: Vec<Vec<f64>>,
}

/// Learning-rate group a parameter slot belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Weights,
    Gate,
}

/// A complete model: one recurrent layer, its time gate, and the readout.
#[derive(Clone, Debug, PartialEq)]
pub struct GlstmModel {
    pub params: LstmParams,
    pub gate: GateParams,
    pub head: OutputHead,
    pub candidate_tanh: bool,
}

/// Borrowed view of one sequence: `dim` consecutive floats per step.
#[derive(Clone, Copy, Debug)]
pub struct SeqView<'a> {
    data: &'a [f64],
    dim: usize,
}

impl<'a> SeqView<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Self {
        assert!(dim > 0 && data.len().is_multiple_of(dim), "sequence/dim mismatch");
        SeqView { data, dim }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn step(&self, n: usize) -> &'a [f64] {
        &self.data[n * self.dim..(n + 1) * self.dim]
    }
}

/// `acc[j] += v[i] * w[i][j]` over all i, i-major. For any fixed j the adds
/// land in ascending-i order, which the per-unit skip path reproduces.
fn accumulate_vec_mat(acc: &mut [f64], v: &[f64], w: &Matrix) {
    debug_assert_eq!(acc.len(), w.cols());
    debug_assert_eq!(v.len(), w.rows());
    for (i, &vi) in v.iter().enumerate() {
        for (a, &wij) in acc.iter_mut().zip(w.row(i)) {
            *a += vi * wij;
        }
    }
}

/// Pre-activation of unit `j` for one gate; same add order as the dense path.
#[inline]
fn unit_preact(b: f64, w_x: &Matrix, w_h: &Matrix, j: usize, x: &[f64], h_prev: &[f64]) -> f64 {
    let mut acc = b;
    for (i, &xi) in x.iter().enumerate() {
        acc += xi * w_x.get(i, j);
    }
    for (i, &hi) in h_prev.iter().enumerate() {
        acc += hi * w_h.get(i, j);
    }
    acc
}

#[inline]
fn candidate_act(pre: f64, use_tanh: bool) -> f64 {
    if use_tanh {
        pre.tanh()
    } else {
        sigmoid(pre)
    }
}

/// One ungated LSTM cell step: returns (h_tilde, c_tilde, gates).
pub fn lstm_step(
    p: &LstmParams,
    candidate_tanh: bool,
    x: &[f64],
    s: &CellState,
) -> (Vec<f64>, Vec<f64>, StepGates) {
    assert_eq!(x.len(), p.input_dim(), "input dim mismatch");
    assert_eq!(s.h.len(), p.hidden_dim(), "state dim mismatch");
    let mut pre_i = p.b_i.clone();
    let mut pre_f = p.b_f.clone();
    let mut pre_g = p.b_g.clone();
    let mut pre_o = p.b_o.clone();
    accumulate_vec_mat(&mut pre_i, x, &p.w_xi);
    accumulate_vec_mat(&mut pre_i, &s.h, &p.w_hi);
    accumulate_vec_mat(&mut pre_f, x, &p.w_xf);
    accumulate_vec_mat(&mut pre_f, &s.h, &p.w_hf);
    accumulate_vec_mat(&mut pre_g, x, &p.w_xg);
    accumulate_vec_mat(&mut pre_g, &s.h, &p.w_hg);
    accumulate_vec_mat(&mut pre_o, x, &p.w_xo);
    accumulate_vec_mat(&mut pre_o, &s.h, &p.w_ho);

    // Activations reuse the pre-activation buffers.
    let h = p.hidden_dim();
    let (mut i, mut f, mut z, mut o) = (pre_i, pre_f, pre_g, pre_o);
    let mut c_tilde = vec![0.0; h];
    let mut h_tilde = vec![0.0; h];
    for j in 0..h {
        i[j] = sigmoid(i[j]);
        f[j] = sigmoid(f[j]);
        z[j] = candidate_act(z[j], candidate_tanh);
        o[j] = sigmoid(o[j]);
        c_tilde[j] = f[j] * s.c[j] + i[j] * z[j];
        h_tilde[j] = o[j] * c_tilde[j].tanh();
    }
    (h_tilde, c_tilde, StepGates { i, f, o, z })
}

/// One gated step: blends the cell step with the previous state through the
/// time gate at `t`.
pub fn glstm_step(
    p: &LstmParams,
    g: &GateParams,
    candidate_tanh: bool,
    t: f64,
    x: &[f64],
    s: &CellState,
) -> CellState {
    let (h_tilde, c_tilde, _) = lstm_step(p, candidate_tanh, x, s);
    let k = gate_value(g, t);
    let h = p.hidden_dim();
    let mut next = CellState::zeros(h);
    for j in 0..h {
        next.c[j] = k[j] * c_tilde[j] + (1.0 - k[j]) * s.c[j];
        next.h[j] = k[j] * h_tilde[j] + (1.0 - k[j]) * s.h[j];
    }
    next
}

/// Statistics from a threshold-skipped forward pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkipStats {
    /// (unit, step) pairs whose full update ran.
    pub updated: usize,
    /// Total (unit, step) pairs.
    pub total: usize,
}

impl SkipStats {
    pub fn open_fraction(&self) -> f64 {
        self.updated as f64 / self.total as f64
    }
}

impl GlstmModel {
    pub fn zeros(input_dim: usize, hidden: usize, out_dim: usize) -> Self {
        GlstmModel {
            params: LstmParams::zeros(input_dim, hidden),
            gate: GateParams::constant(hidden, 0.0, 1.0),
            head: OutputHead::zeros(hidden, out_dim),
            candidate_tanh: false,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.params.hidden_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.head.b_out.len()
    }

    /// Full-sequence forward from the zero state, caching all activations.
    /// Panics on an empty sequence.
    pub fn forward(&self, seq: &SeqView, axis: &TimeAxis) -> (Vec<f64>, ForwardTrace) {
        assert!(!seq.is_empty(), "sequence must be nonempty");
        assert_eq!(seq.len(), axis.len(), "sequence/time-axis length mismatch");
        let hidden = self.hidden_dim();
        let mut state = CellState::zeros(hidden);
        let mut steps = Vec::with_capacity(seq.len());
        let mut k = vec![0.0; hidden];
        for n in 0..seq.len() {
            let t = axis.at(n);
            let x = seq.step(n);
            let (h_tilde, c_tilde, gates) = lstm_step(&self.params, self.candidate_tanh, x, &state);
            gate_value_into(&self.gate, t, &mut k);
            let mut next = CellState::zeros(hidden);
            for j in 0..hidden {
                next.c[j] = k[j] * c_tilde[j] + (1.0 - k[j]) * state.c[j];
                next.h[j] = k[j] * h_tilde[j] + (1.0 - k[j]) * state.h[j];
            }
            steps.push(TraceStep {
                t,
                x: x.to_vec(),
                i: gates.i,
                f: gates.f,
                o: gates.o,
                z: gates.z,
                c_tilde,
                h_tilde,
                k: k.clone(),
                c: next.c.clone(),
                h: next.h.clone(),
            });
            state = next;
        }
        let output = self.head.apply(&state.h);
        (output, ForwardTrace { steps })
    }

    /// Forward pass without the activation cache, for inference and
    /// evaluation. Computes the same arithmetic as [`GlstmModel::forward`],
    /// so the outputs are bit-identical.
    pub fn forward_output(&self, seq: &SeqView, axis: &TimeAxis) -> Vec<f64> {
        assert!(!seq.is_empty(), "sequence must be nonempty");
        assert_eq!(seq.len(), axis.len(), "sequence/time-axis length mismatch");
        let hidden = self.hidden_dim();
        let mut state = CellState::zeros(hidden);
        let mut k = vec![0.0; hidden];
        for n in 0..seq.len() {
            let (h_tilde, c_tilde, _) =
                lstm_step(&self.params, self.candidate_tanh, seq.step(n), &state);
            gate_value_into(&self.gate, axis.at(n), &mut k);
            for j in 0..hidden {
                state.c[j] = k[j] * c_tilde[j] + (1.0 - k[j]) * state.c[j];
                state.h[j] = k[j] * h_tilde[j] + (1.0 - k[j]) * state.h[j];
            }
        }
        self.head.apply(&state.h)
    }

    /// Exact reverse-mode gradients for every parameter, given the loss
    /// gradient at the head output. Also returns per-step input gradients
    /// and hidden-state adjoints.
    pub fn backward(&self, trace: &ForwardTrace, d_output: &[f64]) -> BackwardResult {
        assert!(!trace.is_empty(), "trace must be nonempty");
        assert_eq!(d_output.len(), self.output_dim(), "output grad dim mismatch");
        let hidden = self.hidden_dim();
        let n_steps = trace.len();
        let mut grads = Gradients::zeros_like(self);

        // Head: y = h_N W_out + b_out.
        let h_final = trace.final_h();
        add_outer(&mut grads.head.w_out, h_final, d_output);
        for (b, &dy) in grads.head.b_out.iter_mut().zip(d_output) {
            *b += dy;
        }
        let mut dh = mat_vec(&self.head.w_out, d_output);
        let mut dc = vec![0.0; hidden];

        let mut d_inputs = vec![Vec::new(); n_steps];
        let mut d_hidden = vec![Vec::new(); n_steps];

        // Step-local buffers hoisted out of the loop.
        let mut dk = vec![0.0; hidden];
        let mut dh_tilde = vec![0.0; hidden];
        let mut dc_tilde = vec![0.0; hidden];
        let mut dh_next = vec![0.0; hidden]; // becomes dh_{n-1}
        let mut dc_next = vec![0.0; hidden];
        let mut dpre_i = vec![0.0; hidden];
        let mut dpre_f = vec![0.0; hidden];
        let mut dpre_g = vec![0.0; hidden];
        let mut dpre_o = vec![0.0; hidden];

        let zero_state = CellState::zeros(hidden);
        for n in (0..n_steps).rev() {
            d_hidden[n] = dh.clone();
            let step = &trace.steps[n];
            let (c_prev, h_prev): (&[f64], &[f64]) = if n == 0 {
                (&zero_state.c, &zero_state.h)
            } else {
                (&trace.steps[n - 1].c, &trace.steps[n - 1].h)
            };

            for j in 0..hidden {
                let k = step.k[j];
                // h_n = k ht + (1-k) h_prev;  c_n = k ct + (1-k) c_prev
                dh_tilde[j] = k * dh[j];
                dk[j] = (step.h_tilde[j] - h_prev[j]) * dh[j] + (step.c_tilde[j] - c_prev[j]) * dc[j];
                dh_next[j] = (1.0 - k) * dh[j];
                dc_tilde[j] = k * dc[j];
                dc_next[j] = (1.0 - k) * dc[j];

                // ht = o tanh(ct)
                let tc = step.c_tilde[j].tanh();
                let d_o = tc * dh_tilde[j];
                dc_tilde[j] += step.o[j] * (1.0 - tc * tc) * dh_tilde[j];

                // ct = f c_prev + i z
                let d_f = c_prev[j] * dc_tilde[j];
                dc_next[j] += step.f[j] * dc_tilde[j];
                let d_i = step.z[j] * dc_tilde[j];
                let d_z = step.i[j] * dc_tilde[j];

                dpre_i[j] = step.i[j] * (1.0 - step.i[j]) * d_i;
                dpre_f[j] = step.f[j] * (1.0 - step.f[j]) * d_f;
                dpre_o[j] = step.o[j] * (1.0 - step.o[j]) * d_o;
                dpre_g[j] = if self.candidate_tanh {
                    (1.0 - step.z[j] * step.z[j]) * d_z
                } else {
                    step.z[j] * (1.0 - step.z[j]) * d_z
                };
            }

            let p = &self.params;
            let gp = &mut grads.params;
            add_outer(&mut gp.w_xi, &step.x, &dpre_i);
            add_outer(&mut gp.w_hi, h_prev, &dpre_i);
            add_outer(&mut gp.w_xf, &step.x, &dpre_f);
            add_outer(&mut gp.w_hf, h_prev, &dpre_f);
            add_outer(&mut gp.w_xg, &step.x, &dpre_g);
            add_outer(&mut gp.w_hg, h_prev, &dpre_g);
            add_outer(&mut gp.w_xo, &step.x, &dpre_o);
            add_outer(&mut gp.w_ho, h_prev, &dpre_o);
            for j in 0..hidden {
                gp.b_i[j] += dpre_i[j];
                gp.b_f[j] += dpre_f[j];
                gp.b_g[j] += dpre_g[j];
                gp.b_o[j] += dpre_o[j];
            }

            let mut dx = vec![0.0; self.input_dim()];
            mat_vec_add(&p.w_xi, &dpre_i, &mut dx);
            mat_vec_add(&p.w_xf, &dpre_f, &mut dx);
            mat_vec_add(&p.w_xg, &dpre_g, &mut dx);
            mat_vec_add(&p.w_xo, &dpre_o, &mut dx);
            d_inputs[n] = dx;

            mat_vec_add(&p.w_hi, &dpre_i, &mut dh_next);
            mat_vec_add(&p.w_hf, &dpre_f, &mut dh_next);
            mat_vec_add(&p.w_hg, &dpre_g, &mut dh_next);
            mat_vec_add(&p.w_ho, &dpre_o, &mut dh_next);

            let (gmu, gsigma) = gate_grad(&self.gate, step.t);
            for j in 0..hidden {
                grads.d_mu[j] += dk[j] * gmu[j];
                grads.d_sigma[j] += dk[j] * gsigma[j];
            }

            std::mem::swap(&mut dh, &mut dh_next);
            std::mem::swap(&mut dc, &mut dc_next);
        }

        BackwardResult {
            grads,
            d_inputs,
            d_hidden,
        }
    }

    /// Forward pass where a unit whose gate value is at or below `v_t`
    /// copies its previous state and skips its cell-update arithmetic.
    /// With `v_t == 0` this is bit-identical to [`GlstmModel::forward`].
    pub fn forward_thresholded(
        &self,
        seq: &SeqView,
        axis: &TimeAxis,
        v_t: f64,
    ) -> (Vec<f64>, SkipStats) {
        assert!((0.0..1.0).contains(&v_t), "threshold must be in [0, 1)");
        assert!(!seq.is_empty(), "sequence must be nonempty");
        assert_eq!(seq.len(), axis.len(), "sequence/time-axis length mismatch");
        let hidden = self.hidden_dim();
        let p = &self.params;
        let mut state = CellState::zeros(hidden);
        let mut k = vec![0.0; hidden];
        let mut updated = 0usize;
        for n in 0..seq.len() {
            let x = seq.step(n);
            gate_value_into(&self.gate, axis.at(n), &mut k);
            let mut next = CellState::zeros(hidden);
            for j in 0..hidden {
                if k[j] > v_t {
                    updated += 1;
                    let i = sigmoid(unit_preact(p.b_i[j], &p.w_xi, &p.w_hi, j, x, &state.h));
                    let f = sigmoid(unit_preact(p.b_f[j], &p.w_xf, &p.w_hf, j, x, &state.h));
                    let z = candidate_act(
                        unit_preact(p.b_g[j], &p.w_xg, &p.w_hg, j, x, &state.h),
                        self.candidate_tanh,
                    );
                    let o = sigmoid(unit_preact(p.b_o[j], &p.w_xo, &p.w_ho, j, x, &state.h));
                    let c_tilde = f * state.c[j] + i * z;
                    let h_tilde = o * c_tilde.tanh();
                    next.c[j] = k[j] * c_tilde + (1.0 - k[j]) * state.c[j];
                    next.h[j] = k[j] * h_tilde + (1.0 - k[j]) * state.h[j];
                } else {
                    next.c[j] = state.c[j];
                    next.h[j] = state.h[j];
                }
            }
            state = next;
        }
        let output = self.head.apply(&state.h);
        let stats = SkipStats {
            updated,
            total: hidden * seq.len(),
        };
        (output, stats)
    }
}

/// Copies the recurrent weights and head out of a model for use in a plain
/// (gate-free) LSTM. Faithful only when every sigma is large enough that
/// the gate is effectively open across the whole sequence.
pub fn export_to_lstm(model: &GlstmModel) -> (LstmParams, OutputHead) {
    (model.params.clone(), model.head.clone())
}

/// Independent gate-free LSTM forward pass. Kept separate from the gated
/// code path so the two can be checked against each other; returns the
/// head output and the full hidden trajectory.
pub fn lstm_forward(
    params: &LstmParams,
    head: &OutputHead,
    candidate_tanh: bool,
    seq: &SeqView,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    assert!(!seq.is_empty(), "sequence must be nonempty");
    let hidden = params.hidden_dim();
    let mut c = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    let mut trajectory = Vec::with_capacity(seq.len());
    for n in 0..seq.len() {
        let x = seq.step(n);
        let affine = |w_x: &Matrix, w_h: &Matrix, b: &[f64]| -> Vec<f64> {
            let mut pre = vec_mat(x, w_x);
            let rec = vec_mat(&h, w_h);
            for ((p, r), bb) in pre.iter_mut().zip(rec).zip(b) {
                *p += r + bb;
            }
            pre
        };
        let i: Vec<f64> = affine(&params.w_xi, &params.w_hi, &params.b_i)
            .into_iter()
            .map(sigmoid)
            .collect();
        let f: Vec<f64> = affine(&params.w_xf, &params.w_hf, &params.b_f)
            .into_iter()
            .map(sigmoid)
            .collect();
        let z: Vec<f64> = affine(&params.w_xg, &params.w_hg, &params.b_g)
            .into_iter()
            .map(|p| candidate_act(p, candidate_tanh))
            .collect();
        let o: Vec<f64> = affine(&params.w_xo, &params.w_ho, &params.b_o)
            .into_iter()
            .map(sigmoid)
            .collect();
        for j in 0..hidden {
            c[j] = f[j] * c[j] + i[j] * z[j];
            h[j] = o[j] * c[j].tanh();
        }
        trajectory.push(h.clone());
    }
    (head.apply(&h), trajectory)
}

impl Gradients {
    pub fn zeros_like(model: &GlstmModel) -> Self {
        Gradients {
            params: LstmParams::zeros(model.input_dim(), model.hidden_dim()),
            head: OutputHead::zeros(model.hidden_dim(), model.output_dim()),
            d_mu: vec![0.0; model.hidden_dim()],
            d_sigma: vec![0.0; model.hidden_dim()],
        }
    }

    /// `self += s * other`, slot by slot.
    pub fn add_scaled(&mut self, other: &Gradients, s: f64) {
        let mut views = self.slot_views_mut();
        let other_views = other.slot_views();
        assert_eq!(views.len(), other_views.len());
        for ((_, a), (_, b)) in views.iter_mut().zip(other_views) {
            assert_eq!(a.len(), b.len(), "gradient slot shape mismatch");
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, slot) in self.slot_views_mut() {
            for v in slot {
                *v *= s;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.slot_views()
            .iter()
            .flat_map(|(_, s)| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.slot_views()
            .iter()
            .all(|(_, s)| s.iter().all(|v| v.is_finite()))
    }

    pub fn slot_views(&self) -> Vec<(ParamGroup, &[f64])> {
        use ParamGroup::*;
        let p = &self.params;
        vec![
            (Weights, p.w_xi.data()),
            (Weights, p.w_hi.data()),
            (Weights, &p.b_i[..]),
            (Weights, p.w_xf.data()),
            (Weights, p.w_hf.data()),
            (Weights, &p.b_f[..]),
            (Weights, p.w_xg.data()),
            (Weights, p.w_hg.data()),
            (Weights, &p.b_g[..]),
            (Weights, p.w_xo.data()),
            (Weights, p.w_ho.data()),
            (Weights, &p.b_o[..]),
            (Weights, self.head.w_out.data()),
            (Weights, &self.head.b_out[..]),
            (Gate, &self.d_mu[..]),
            (Gate, &self.d_sigma[..]),
        ]
    }

    pub fn slot_views_mut(&mut self) -> Vec<(ParamGroup, &mut [f64])> {
        use ParamGroup::*;
        let p = &mut self.params;
        vec![
            (Weights, p.w_xi.data_mut()),
            (Weights, p.w_hi.data_mut()),
            (Weights, &mut p.b_i[..]),
            (Weights, p.w_xf.data_mut()),
            (Weights, p.w_hf.data_mut()),
            (Weights, &mut p.b_f[..]),
            (Weights, p.w_xg.data_mut()),
            (Weights, p.w_hg.data_mut()),
            (Weights, &mut p.b_g[..]),
            (Weights, p.w_xo.data_mut()),
            (Weights, p.w_ho.data_mut()),
            (Weights, &mut p.b_o[..]),
            (Weights, self.head.w_out.data_mut()),
            (Weights, &mut self.head.b_out[..]),
            (Gate, &mut self.d_mu[..]),
            (Gate, &mut self.d_sigma[..]),
        ]
    }
}

impl GlstmModel {
    /// Parameter slots in the same fixed order as [`Gradients::slot_views`],
    /// so optimizers can pair them positionally.
    pub fn slot_views_mut(&mut self) -> Vec<(ParamGroup, &mut [f64])> {
        use ParamGroup::*;
        let p = &mut self.params;
        vec![
            (Weights, p.w_xi.data_mut()),
            (Weights, p.w_hi.data_mut()),
            (Weights, &mut p.b_i[..]),
            (Weights, p.w_xf.data_mut()),
            (Weights, p.w_hf.data_mut()),
            (Weights, &mut p.b_f[..]),
            (Weights, p.w_xg.data_mut()),
            (Weights, p.w_hg.data_mut()),
            (Weights, &mut p.b_g[..]),
            (Weights, p.w_xo.data_mut()),
            (Weights, p.w_ho.data_mut()),
            (Weights, &mut p.b_o[..]),
            (Weights, self.head.w_out.data_mut()),
            (Weights, &mut self.head.b_out[..]),
            (Gate, &mut self.gate.mu[..]),
            (Gate, &mut self.gate.sigma[..]),
        ]
    }

    pub fn slot_views(&self) -> Vec<(ParamGroup, &[f64])> {
        use ParamGroup::*;
        let p = &self.params;
        vec![
            (Weights, p.w_xi.data()),
            (Weights, p.w_hi.data()),
            (Weights, &p.b_i[..]),
            (Weights, p.w_xf.data()),
            (Weights, p.w_hf.data()),
            (Weights, &p.b_f[..]),
            (Weights, p.w_xg.data()),
            (Weights, p.w_hg.data()),
            (Weights, &p.b_g[..]),
            (Weights, p.w_xo.data()),
            (Weights, p.w_ho.data()),
            (Weights, &p.b_o[..]),
            (Weights, self.head.w_out.data()),
            (Weights, &self.head.b_out[..]),
            (Gate, &self.gate.mu[..]),
            (Gate, &self.gate.sigma[..]),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::SeededRng;

    fn random_model(
        input_dim: usize,
        hidden: usize,
        out_dim: usize,
        seed: u64,
        candidate_tanh: bool,
    ) -> GlstmModel {
        let mut rng = SeededRng::new(seed);
        let mut model = GlstmModel::zeros(input_dim, hidden, out_dim);
        for (_, slot) in model.slot_views_mut() {
            for v in slot {
                *v = rng.uniform(-0.5, 0.5);
            }
        }
        model.gate = GateParams::new(
            (0..hidden).map(|_| rng.uniform(1.0, 12.0)).collect(),
            (0..hidden).map(|_| rng.uniform(4.0, 10.0)).collect(),
        );
        model.candidate_tanh = candidate_tanh;
        model
    }

    fn random_seq(len: usize, dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = SeededRng::new(seed);
        (0..len * dim).map(|_| rng.uniform(-1.0, 1.0)).collect()
    }

    #[test]
    fn zero_params_step_hand_values() {
        let p = LstmParams::zeros(3, 2);
        let s = CellState::zeros(2);
        let (h_tilde, c_tilde, gates) = lstm_step(&p, false, &[0.7, -0.3, 0.1], &s);
        for j in 0..2 {
            assert_eq!(gates.i[j], 0.5);
            assert_eq!(gates.f[j], 0.5);
            assert_eq!(gates.o[j], 0.5);
            assert_eq!(c_tilde[j], 0.25); // 0.5 * sig(0) = 0.25
            assert!((h_tilde[j] - 0.5 * 0.25_f64.tanh()).abs() < 1e-16);
        }
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let mut p = LstmParams::zeros(2, 3);
        p.b_f = vec![30.0; 3];
        let s = CellState {
            c: vec![0.4, -1.2, 2.0],
            h: vec![0.0; 3],
        };
        let (_, c_tilde, gates) = lstm_step(&p, false, &[0.5, 0.5], &s);
        for j in 0..3 {
            let expected = s.c[j] + gates.i[j] * gates.z[j];
            assert!((c_tilde[j] - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn fully_open_gate_equals_plain_step() {
        let model = random_model(2, 4, 1, 3, false);
        let mut g = model.gate.clone();
        // t = mu for every unit makes k exactly 1.
        let t = 5.0;
        for m in &mut g.mu {
            *m = t;
        }
        let s = CellState {
            c: vec![0.3, -0.2, 0.1, 0.8],
            h: vec![-0.5, 0.2, 0.9, -0.1],
        };
        let x = [0.4, -0.7];
        let (h_tilde, c_tilde, _) = lstm_step(&model.params, false, &x, &s);
        let next = glstm_step(&model.params, &g, false, t, &x, &s);
        assert_eq!(next.c, c_tilde);
        assert_eq!(next.h, h_tilde);
    }

    #[test]
    fn closed_gate_copies_state() {
        let model = random_model(2, 4, 1, 4, false);
        let g = GateParams::new(vec![1e6; 4], vec![0.5; 4]);
        let s = CellState {
            c: vec![0.3, -0.2, 0.1, 0.8],
            h: vec![-0.5, 0.2, 0.9, -0.1],
        };
        let next = glstm_step(&model.params, &g, false, 1.0, &[0.4, -0.7], &s);
        for j in 0..4 {
            assert!((next.c[j] - s.c[j]).abs() < 1e-12);
            assert!((next.h[j] - s.h[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_gate_updates_only_open_unit() {
        let model = random_model(2, 3, 1, 5, false);
        let t = 7.0;
        // Unit 1 open exactly (mu = t), the rest numerically closed.
        let g = GateParams::new(vec![-1e5, t, 1e5], vec![0.01, 1.0, 0.01]);
        let s = CellState {
            c: vec![0.5, 0.5, 0.5],
            h: vec![-0.25, -0.25, -0.25],
        };
        let x = [0.3, 0.9];
        let next = glstm_step(&model.params, &g, false, t, &x, &s);
        let (h_tilde, c_tilde, _) = lstm_step(&model.params, false, &x, &s);
        assert_eq!(next.c[1], c_tilde[1]);
        assert_eq!(next.h[1], h_tilde[1]);
        assert_eq!(next.c[0], s.c[0]);
        assert_eq!(next.h[2], s.h[2]);
    }

    #[test]
    fn forward_single_step_fully_open_matches_step_plus_head() {
        let mut model = random_model(3, 5, 2, 6, false);
        model.gate = GateParams::new(vec![1.0; 5], vec![2.0; 5]);
        let x = random_seq(1, 3, 7);
        let seq = SeqView::new(&x, 3);
        let (out, trace) = model.forward(&seq, &TimeAxis::indices(1));
        let (h_tilde, c_tilde, _) =
            lstm_step(&model.params, false, seq.step(0), &CellState::zeros(5));
        assert_eq!(trace.steps[0].h, h_tilde);
        assert_eq!(trace.steps[0].c, c_tilde);
        assert_eq!(out, model.head.apply(&h_tilde));
    }

    #[test]
    fn forward_is_deterministic() {
        let model = random_model(2, 6, 1, 8, false);
        let x = random_seq(40, 2, 9);
        let seq = SeqView::new(&x, 2);
        let axis = TimeAxis::indices(40);
        let (out1, trace1) = model.forward(&seq, &axis);
        let (out2, trace2) = model.forward(&seq, &axis);
        assert_eq!(out1, out2);
        assert_eq!(trace1.final_h(), trace2.final_h());
    }

    #[test]
    #[should_panic(expected = "sequence must be nonempty")]
    fn forward_rejects_empty_sequence() {
        let model = random_model(2, 3, 1, 1, false);
        let data: Vec<f64> = vec![];
        let seq = SeqView::new(&data, 2);
        model.forward(&seq, &TimeAxis::indices(0));
    }

    #[test]
    fn wide_gate_forward_matches_independent_lstm() {
        for candidate_tanh in [false, true] {
            let mut model = random_model(2, 8, 3, 10, candidate_tanh);
            model.gate = GateParams::new(vec![0.0; 8], vec![1e8; 8]);
            let x = random_seq(100, 2, 11);
            let seq = SeqView::new(&x, 2);
            let (gated_out, _) = model.forward(&seq, &TimeAxis::indices(100));
            let (plain_out, _) = lstm_forward(&model.params, &model.head, candidate_tanh, &seq);
            for (a, b) in gated_out.iter().zip(&plain_out) {
                assert!(
                    (a - b).abs() < 1e-9,
                    "gated {a} vs plain {b} (candidate_tanh={candidate_tanh})"
                );
            }
        }
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let model = random_model(2, 4, 2, 12, false);
        let x = random_seq(10, 2, 13);
        let seq = SeqView::new(&x, 2);
        let axis = TimeAxis::indices(10);
        let (_, trace) = model.forward(&seq, &axis);
        let result = model.backward(&trace, &[0.0, 0.0]);
        for (_, slot) in result.grads.slot_views() {
            assert!(slot.iter().all(|&v| v == 0.0));
        }
        assert!(result.d_inputs.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn closed_gate_kills_input_gradient() {
        // Underflowed gate (k exactly 0 in f64) at every step: every input
        // gradient must be exactly zero.
        let mut model = random_model(2, 3, 1, 14, false);
        model.gate = GateParams::new(vec![-1e6; 3], vec![0.01; 3]);
        let x = random_seq(5, 2, 15);
        let seq = SeqView::new(&x, 2);
        let axis = TimeAxis::indices(5);
        let (_, trace) = model.forward(&seq, &axis);
        assert!(trace.steps.iter().all(|s| s.k.iter().all(|&k| k == 0.0)));
        let result = model.backward(&trace, &[1.0]);
        for dx in &result.d_inputs {
            assert!(dx.iter().all(|&v| v == 0.0), "leaked gradient {dx:?}");
        }
    }

    #[test]
    fn backward_matches_finite_differences_small_net() {
        for candidate_tanh in [false, true] {
            let model = random_model(2, 4, 2, 16 + candidate_tanh as u64, candidate_tanh);
            let x = random_seq(6, 2, 17);
            let seq = SeqView::new(&x, 2);
            let axis = TimeAxis::indices(6);
            let target = [0.3, -0.8];

            let loss_of = |m: &GlstmModel| -> f64 {
                let (out, _) = m.forward(&seq, &axis);
                out.iter().zip(&target).map(|(o, t)| (o - t) * (o - t)).sum::<f64>()
                    / target.len() as f64
            };
            let (out, trace) = model.forward(&seq, &axis);
            let d_out: Vec<f64> = out
                .iter()
                .zip(&target)
                .map(|(o, t)| 2.0 * (o - t) / target.len() as f64)
                .collect();
            let result = model.backward(&trace, &d_out);

            let eps = 1e-5;
            let grads = result.grads.slot_views();
            let n_slots = grads.len();
            let mut worst = 0.0_f64;
            for slot_idx in 0..n_slots {
                for elem_idx in 0..grads[slot_idx].1.len() {
                    let mut plus = model.clone();
                    plus.slot_views_mut()[slot_idx].1[elem_idx] += eps;
                    let mut minus = model.clone();
                    minus.slot_views_mut()[slot_idx].1[elem_idx] -= eps;
                    let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * eps);
                    let analytic = grads[slot_idx].1[elem_idx];
                    let rel = (analytic - numeric).abs()
                        / analytic.abs().max(numeric.abs()).max(1e-8);
                    worst = worst.max(rel);
                }
            }
            // These sign-mixed weights can leave individual gradients near
            // zero by cancellation, where the relative metric is dominated
            // by finite-difference roundoff; the tight 1e-6 verification
            // runs on well-conditioned configurations in the gradient
            // oracle suite.
            assert!(
                worst < 1e-4,
                "worst rel error {worst:.3e} (candidate_tanh={candidate_tanh})"
            );
        }
    }

    #[test]
    fn thresholded_zero_threshold_bit_identical() {
        let model = random_model(2, 6, 1, 18, false);
        let x = random_seq(50, 2, 19);
        let seq = SeqView::new(&x, 2);
        let axis = TimeAxis::indices(50);
        let (full, _) = model.forward(&seq, &axis);
        let (skipped, stats) = model.forward_thresholded(&seq, &axis, 0.0);
        assert_eq!(full, skipped);
        assert_eq!(stats.updated, stats.total);
    }

    #[test]
    fn thresholded_near_one_skips_almost_everything() {
        let model = random_model(2, 6, 1, 20, false);
        let x = random_seq(50, 2, 21);
        let seq = SeqView::new(&x, 2);
        let axis = TimeAxis::indices(50);
        let (_, stats) = model.forward_thresholded(&seq, &axis, 1.0 - 1e-12);
        assert!(
            stats.open_fraction() < 0.1,
            "open fraction {}",
            stats.open_fraction()
        );
    }

    #[test]
    fn thresholded_skip_error_bounded_per_step() {
        // Gate values in (0, v_t] contribute at most v_t * |ct - c_prev| of
        // state error per skipped step.
        let model = random_model(2, 8, 1, 22, false);
        let x = random_seq(100, 2, 23);
        let seq = SeqView::new(&x, 2);
        let axis = TimeAxis::indices(100);
        let v_t = 0.01;
        let (_, trace) = model.forward(&seq, &axis);
        let (full, _) = model.forward(&seq, &axis);
        let (skipped, _) = model.forward_thresholded(&seq, &axis, v_t);

        let zero = CellState::zeros(8);
        let mut bound = 0.0_f64;
        for (n, step) in trace.steps.iter().enumerate() {
            let (c_prev, h_prev): (&[f64], &[f64]) = if n == 0 {
                (&zero.c, &zero.h)
            } else {
                (&trace.steps[n - 1].c, &trace.steps[n - 1].h)
            };
            for j in 0..8 {
                if step.k[j] <= v_t {
                    let dc = (step.c_tilde[j] - c_prev[j]).abs();
                    let dh = (step.h_tilde[j] - h_prev[j]).abs();
                    bound += v_t * dc.max(dh);
                }
            }
        }
        let observed = full
            .iter()
            .zip(&skipped)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        // Allow slack for error propagation through the recurrence.
        assert!(
            observed <= (bound + 1e-12) * 10.0,
            "observed {observed:.3e} vs per-step bound {bound:.3e}"
        );
    }

    #[test]
    fn export_copies_weights_bit_exactly_and_is_idempotent() {
        let model = random_model(3, 5, 2, 24, false);
        let (p1, h1) = export_to_lstm(&model);
        assert_eq!(p1, model.params);
        assert_eq!(h1, model.head);
        let again = GlstmModel {
            params: p1.clone(),
            gate: model.gate.clone(),
            head: h1.clone(),
            candidate_tanh: model.candidate_tanh,
        };
        let (p2, h2) = export_to_lstm(&again);
        assert_eq!(p1, p2);
        assert_eq!(h1, h2);
    }

    #[test]
    fn trace_replay_reproduces_stored_states() {
        // Recomputing each step's blend from the cached activations must
        // give back the stored states bit-for-bit.
        let model = random_model(2, 5, 1, 27, false);
        let x = random_seq(15, 2, 28);
        let seq = SeqView::new(&x, 2);
        let (_, trace) = model.forward(&seq, &TimeAxis::indices(15));
        let zero = CellState::zeros(5);
        for n in 0..trace.len() {
            let step = &trace.steps[n];
            let (c_prev, h_prev): (&[f64], &[f64]) = if n == 0 {
                (&zero.c, &zero.h)
            } else {
                (&trace.steps[n - 1].c, &trace.steps[n - 1].h)
            };
            for j in 0..5 {
                let c = step.k[j] * step.c_tilde[j] + (1.0 - step.k[j]) * c_prev[j];
                let h = step.k[j] * step.h_tilde[j] + (1.0 - step.k[j]) * h_prev[j];
                assert_eq!(c, step.c[j]);
                assert_eq!(h, step.h[j]);
                assert_eq!(step.h_tilde[j], step.o[j] * step.c_tilde[j].tanh());
                assert_eq!(
                    step.c_tilde[j],
                    step.f[j] * c_prev[j] + step.i[j] * step.z[j]
                );
            }
        }
    }

    #[test]
    fn gate_identity_trajectory_matches_same_code_path() {
        // k == 1 at every step (t = mu for all units on a constant axis is
        // impossible, so use huge sigma instead and compare against the
        // plain-step recurrence computed by the same cell code).
        let mut model = random_model(2, 4, 1, 25, false);
        model.gate = GateParams::new(vec![0.0; 4], vec![1e300; 4]);
        let x = random_seq(12, 2, 26);
        let seq = SeqView::new(&x, 2);
        let axis = TimeAxis::indices(12);
        // exp(-(t/1e300)^2) == 1.0 exactly in f64 for these t.
        let (out_gated, trace) = model.forward(&seq, &axis);
        assert!(trace.steps.iter().all(|s| s.k.iter().all(|&k| k == 1.0)));

        let mut state = CellState::zeros(4);
        for n in 0..seq.len() {
            let (h_tilde, c_tilde, _) = lstm_step(&model.params, false, seq.step(n), &state);
            state = CellState {
                c: c_tilde,
                h: h_tilde,
            };
        }
        assert_eq!(out_gated, model.head.apply(&state.h));
    }
}

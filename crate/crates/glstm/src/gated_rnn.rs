//! A plain tanh RNN with the same per-unit time gate as the gated LSTM:
//!
//! ```text
//! ht_n = tanh(x_n W_x + h_{n-1} W_h)
//! h_n  = k_n (.) ht_n + (1 - k_n) (.) h_{n-1}
//! ```
//!
//! This smaller network makes the gate's effect on gradient flow easy to
//! inspect: a step with k = 0 contributes no gradient terms at all, so the
//! loss gradient depends only on quantities from open steps.

use crate::math::{add_outer, mat_vec, vec_mat, Matrix};
use crate::timegate::{gate_grad, gate_value, GateParams, TimeAxis};

#[derive(Clone, Debug, PartialEq)]
pub struct GatedRnnParams {
    pub w_x: Matrix, // D x H
    pub w_h: Matrix, // H x H
    pub gate: GateParams,
}

impl GatedRnnParams {
    pub fn input_dim(&self) -> usize {
        self.w_x.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_x.cols()
    }
}

/// Per-step cache; `times` is present only when the gates came from the
/// Gaussian parameters (it is what makes mu/sigma gradients well-defined).
#[derive(Clone, Debug)]
pub struct GatedRnnTrace {
    pub inputs: Vec<Vec<f64>>,
    pub h_tilde: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
    pub times: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct GatedRnnGradients {
    pub d_w_x: Matrix,
    pub d_w_h: Matrix,
    pub d_mu: Vec<f64>,
    pub d_sigma: Vec<f64>,
    pub d_inputs: Vec<Vec<f64>>,
}

/// Forward pass with gate values computed from the Gaussian parameters.
/// Returns the final hidden state and the full trace.
pub fn gated_rnn_forward(
    p: &GatedRnnParams,
    seq: &[Vec<f64>],
    axis: &TimeAxis,
) -> (Vec<f64>, GatedRnnTrace) {
    assert!(!seq.is_empty(), "sequence must be nonempty");
    assert_eq!(seq.len(), axis.len(), "sequence/time-axis length mismatch");
    let gates: Vec<Vec<f64>> = axis.values().iter().map(|&t| gate_value(&p.gate, t)).collect();
    let (h, mut trace) = run_forward(&p.w_x, &p.w_h, seq, &gates);
    trace.times = Some(axis.values().to_vec());
    (h, trace)
}

/// Forward pass with explicit per-step gate vectors (for hand-built open /
/// closed patterns). The trace carries no time axis, so a later backward
/// pass reports zero mu/sigma gradients.
pub fn gated_rnn_forward_with_gates(
    p: &GatedRnnParams,
    seq: &[Vec<f64>],
    gates: &[Vec<f64>],
) -> (Vec<f64>, GatedRnnTrace) {
    assert!(!seq.is_empty(), "sequence must be nonempty");
    assert_eq!(seq.len(), gates.len(), "sequence/gates length mismatch");
    run_forward(&p.w_x, &p.w_h, seq, gates)
}

fn run_forward(
    w_x: &Matrix,
    w_h: &Matrix,
    seq: &[Vec<f64>],
    gates: &[Vec<f64>],
) -> (Vec<f64>, GatedRnnTrace) {
    let hidden = w_x.cols();
    let mut h = vec![0.0; hidden];
    let mut trace = GatedRnnTrace {
        inputs: Vec::with_capacity(seq.len()),
        h_tilde: Vec::with_capacity(seq.len()),
        h: Vec::with_capacity(seq.len()),
        k: Vec::with_capacity(seq.len()),
        times: None,
    };
    for (x, k) in seq.iter().zip(gates) {
        let mut pre = vec_mat(x, w_x);
        for (p, r) in pre.iter_mut().zip(vec_mat(&h, w_h)) {
            *p += r;
        }
        let h_tilde: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
        let next: Vec<f64> = (0..hidden)
            .map(|j| k[j] * h_tilde[j] + (1.0 - k[j]) * h[j])
            .collect();
        trace.inputs.push(x.clone());
        trace.h_tilde.push(h_tilde);
        trace.k.push(k.clone());
        trace.h.push(next.clone());
        h = next;
    }
    (h, trace)
}

/// Exact BPTT given the loss gradient at the final hidden state.
pub fn gated_rnn_backward(
    p: &GatedRnnParams,
    trace: &GatedRnnTrace,
    d_h_final: &[f64],
) -> GatedRnnGradients {
    let hidden = p.hidden_dim();
    assert_eq!(d_h_final.len(), hidden, "final grad dim mismatch");
    let n_steps = trace.h.len();
    let mut grads = GatedRnnGradients {
        d_w_x: Matrix::zeros(p.input_dim(), hidden),
        d_w_h: Matrix::zeros(hidden, hidden),
        d_mu: vec![0.0; hidden],
        d_sigma: vec![0.0; hidden],
        d_inputs: vec![Vec::new(); n_steps],
    };
    let zeros = vec![0.0; hidden];
    let mut dh = d_h_final.to_vec();
    for n in (0..n_steps).rev() {
        let h_prev: &[f64] = if n == 0 { &zeros } else { &trace.h[n - 1] };
        let k = &trace.k[n];
        let h_tilde = &trace.h_tilde[n];
        let mut dh_tilde = vec![0.0; hidden];
        let mut dk = vec![0.0; hidden];
        let mut dh_next = vec![0.0; hidden];
        for j in 0..hidden {
            dh_tilde[j] = k[j] * dh[j];
            dk[j] = (h_tilde[j] - h_prev[j]) * dh[j];
            dh_next[j] = (1.0 - k[j]) * dh[j];
        }
        let dpre: Vec<f64> = (0..hidden)
            .map(|j| (1.0 - h_tilde[j] * h_tilde[j]) * dh_tilde[j])
            .collect();
        add_outer(&mut grads.d_w_x, &trace.inputs[n], &dpre);
        add_outer(&mut grads.d_w_h, h_prev, &dpre);
        grads.d_inputs[n] = mat_vec(&p.w_x, &dpre);
        for (acc, v) in dh_next.iter_mut().zip(mat_vec(&p.w_h, &dpre)) {
            *acc += v;
        }
        if let Some(times) = &trace.times {
            let (gmu, gsigma) = gate_grad(&p.gate, times[n]);
            for j in 0..hidden {
                grads.d_mu[j] += dk[j] * gmu[j];
                grads.d_sigma[j] += dk[j] * gsigma[j];
            }
        }
        dh = dh_next;
    }
    grads
}

//! Gradient-norm profiling through time, analytic op counting for the
//! recurrent layer and its time gate, and the finite-difference gradient
//! check used to verify the backward pass.

use std::io::Write;

use rayon::prelude::*;

use crate::lstm::{GlstmModel, Gradients};
use crate::tasks::{Dataset, Sample, Target};
use crate::timegate::TimeAxis;
use crate::training::{cross_entropy_loss, mse_loss};

/// Per-timestep average gradient norm of the loss with respect to the
/// hidden activations, averaged over samples and hidden units.
#[derive(Clone, Debug)]
pub struct GradNormProfile {
    pub values: Vec<f64>,
}

/// Runs forward/backward on up to `max_samples` samples and accumulates
/// the per-step mean absolute hidden-state adjoint.
pub fn gradient_norms(model: &GlstmModel, data: &Dataset, max_samples: usize) -> GradNormProfile {
    assert!(!data.is_empty(), "gradient norms need at least one sample");
    assert!(max_samples > 0, "sample count must be positive");
    let axis = TimeAxis::indices(data.seq_len);
    let n_used = data.len().min(max_samples);
    let hidden = model.hidden_dim() as f64;
    let per_sample: Vec<Vec<f64>> = data.samples[..n_used]
        .par_iter()
        .map(|sample| {
            let seq = sample.view(data.input_dim);
            let (out, trace) = model.forward(&seq, &axis);
            let d_out = match &sample.target {
                Target::Value(t) => mse_loss(&out, t).1,
                Target::Class(label) => cross_entropy_loss(&out, *label).1,
            };
            let result = model.backward(&trace, &d_out);
            result
                .d_hidden
                .iter()
                .map(|dh| dh.iter().map(|v| v.abs()).sum::<f64>() / hidden)
                .collect()
        })
        .collect();
    let mut values = vec![0.0; data.seq_len];
    for sample_profile in &per_sample {
        for (acc, v) in values.iter_mut().zip(sample_profile) {
            *acc += v / n_used as f64;
        }
    }
    GradNormProfile { values }
}

/// CSV export: header `t,gamma`, one row per timestep.
pub fn write_gradnorm_csv<W: Write>(profile: &GradNormProfile, mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,gamma")?;
    for (n, v) in profile.values.iter().enumerate() {
        writeln!(w, "{},{v:.16e}", n + 1)?;
    }
    Ok(())
}

/// Op counts under the convention that one multiply-add is 1 Op and a
/// nonlinearity is 5 Ops.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OpCountReport {
    pub n_lstm: u64,
    pub n_gate: u64,
    pub total: u64,
    pub thresholded_total: u64,
    pub open_fraction: f64,
}

/// Ops for a full LSTM pass: `T * H * (8D + 8H + 29)`.
pub fn op_count_lstm(t: u64, h: u64, d: u64) -> u64 {
    assert!(t > 0 && h > 0 && d > 0, "op counts need positive dims");
    t * h * (8 * d + 8 * h + 29)
}

/// Ops for evaluating the time gate at every unit and step: `13 * T * H`.
pub fn op_count_gate(t: u64, h: u64) -> u64 {
    assert!(t > 0 && h > 0, "op counts need positive dims");
    13 * t * h
}

/// Ops for a threshold-skipped pass: only the open fraction of unit-step
/// updates runs, while the gate itself is always evaluated to make the
/// skip decision.
pub fn op_count_thresholded(t: u64, h: u64, d: u64, open_fraction: f64) -> u64 {
    assert!(
        (0.0..=1.0).contains(&open_fraction),
        "open fraction must be in [0, 1]"
    );
    (open_fraction * op_count_lstm(t, h, d) as f64).round() as u64 + op_count_gate(t, h)
}

pub fn op_count_report(t: u64, h: u64, d: u64, open_fraction: f64) -> OpCountReport {
    let n_lstm = op_count_lstm(t, h, d);
    let n_gate = op_count_gate(t, h);
    OpCountReport {
        n_lstm,
        n_gate,
        total: n_lstm + n_gate,
        thresholded_total: op_count_thresholded(t, h, d, open_fraction),
        open_fraction,
    }
}

fn sample_loss(model: &GlstmModel, sample: &Sample, input_dim: usize, axis: &TimeAxis) -> f64 {
    let (out, _) = model.forward(&sample.view(input_dim), axis);
    match &sample.target {
        Target::Value(t) => mse_loss(&out, t).0,
        Target::Class(label) => cross_entropy_loss(&out, *label).0,
    }
}

/// Central finite differences over every scalar parameter (kernels,
/// biases, head, gate mu and sigma) against the given analytic gradients.
/// Returns the worst relative error with denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_diff_check_against(
    model: &GlstmModel,
    sample: &Sample,
    input_dim: usize,
    axis: &TimeAxis,
    epsilon: f64,
    grads: &Gradients,
) -> f64 {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let n_slots = model.slot_views().len();
    let mut worst = 0.0_f64;
    for slot_idx in 0..n_slots {
        let slot_len = grads.slot_views()[slot_idx].1.len();
        for elem_idx in 0..slot_len {
            let mut plus = model.clone();
            plus.slot_views_mut()[slot_idx].1[elem_idx] += epsilon;
            let mut minus = model.clone();
            minus.slot_views_mut()[slot_idx].1[elem_idx] -= epsilon;
            let numeric = (sample_loss(&plus, sample, input_dim, axis)
                - sample_loss(&minus, sample, input_dim, axis))
                / (2.0 * epsilon);
            let analytic = grads.slot_views()[slot_idx].1[elem_idx];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
            }
        }
    }
    worst
}

/// Computes analytic gradients via the backward pass, then checks them with
/// [`finite_diff_check_against`].
pub fn finite_diff_check(
    model: &GlstmModel,
    sample: &Sample,
    input_dim: usize,
    axis: &TimeAxis,
    epsilon: f64,
) -> f64 {
    let seq = sample.view(input_dim);
    let (out, trace) = model.forward(&seq, axis);
    let d_out = match &sample.target {
        Target::Value(t) => mse_loss(&out, t).1,
        Target::Class(label) => cross_entropy_loss(&out, *label).1,
    };
    let result = model.backward(&trace, &d_out);
    finite_diff_check_against(model, sample, input_dim, axis, epsilon, &result.grads)
}

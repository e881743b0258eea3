//! Adam and RMSProp with two learning-rate groups: one for the recurrent
//! weights and head, one for the time-gate parameters. After every step the
//! gate's sigma values are clamped back to their lower bound.

use serde::{Deserialize, Serialize};

use crate::lstm::{GlstmModel, Gradients, ParamGroup};

/// Per-group learning rates. The gate group may be frozen with lr 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrGroups {
    pub lr_weights: f64,
    pub lr_gate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerSpec {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    RmsProp { decay: f64, epsilon: f64 },
}

impl OptimizerSpec {
    pub fn adam() -> Self {
        OptimizerSpec::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn rmsprop(decay: f64) -> Self {
        OptimizerSpec::RmsProp {
            decay,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter accumulators, one pair of buffers per parameter slot in
/// the model's fixed slot order.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    spec: OptimizerSpec,
    /// First moment (Adam) — unused by RMSProp.
    m: Vec<Vec<f64>>,
    /// Second moment (Adam) or mean-square accumulator (RMSProp).
    v: Vec<Vec<f64>>,
    step: u64,
}

impl OptimizerState {
    pub fn new(spec: OptimizerSpec, model: &GlstmModel) -> Self {
        let sizes: Vec<usize> = model.slot_views().iter().map(|(_, s)| s.len()).collect();
        OptimizerState {
            spec,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Slots are paired positionally between the model
    /// and the gradients; sigma is re-clamped afterwards.
    pub fn apply(&mut self, model: &mut GlstmModel, grads: &Gradients, lr: &LrGroups) {
        self.step += 1;
        let grad_views = grads.slot_views();
        let mut param_views = model.slot_views_mut();
        assert_eq!(param_views.len(), grad_views.len());
        match self.spec {
            OptimizerSpec::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let bc1 = 1.0 - beta1.powi(self.step as i32);
                let bc2 = 1.0 - beta2.powi(self.step as i32);
                for (slot, ((group, p), (_, g))) in
                    param_views.iter_mut().zip(&grad_views).enumerate()
                {
                    let lr = group_lr(lr, *group);
                    if lr == 0.0 {
                        continue;
                    }
                    let m = &mut self.m[slot];
                    let v = &mut self.v[slot];
                    for idx in 0..p.len() {
                        let grad = g[idx];
                        m[idx] = beta1 * m[idx] + (1.0 - beta1) * grad;
                        v[idx] = beta2 * v[idx] + (1.0 - beta2) * grad * grad;
                        let m_hat = m[idx] / bc1;
                        let v_hat = v[idx] / bc2;
                        p[idx] -= lr * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
            OptimizerSpec::RmsProp { decay, epsilon } => {
                assert!((0.0..1.0).contains(&decay), "decay must be in [0, 1)");
                for (slot, ((group, p), (_, g))) in
                    param_views.iter_mut().zip(&grad_views).enumerate()
                {
                    let lr = group_lr(lr, *group);
                    if lr == 0.0 {
                        continue;
                    }
                    let v = &mut self.v[slot];
                    for idx in 0..p.len() {
                        let grad = g[idx];
                        v[idx] = decay * v[idx] + (1.0 - decay) * grad * grad;
                        p[idx] -= lr * grad / (v[idx] + epsilon).sqrt();
                    }
                }
            }
        }
        drop(param_views);
        model.gate.clamp_sigma();
    }
}

fn group_lr(lr: &LrGroups, group: ParamGroup) -> f64 {
    match group {
        ParamGroup::Weights => lr.lr_weights,
        ParamGroup::Gate => lr.lr_gate,
    }
}

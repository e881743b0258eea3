//! Losses (data + compute-budget term), bias/kernel initialization presets,
//! the temporal-curriculum schedule, and the training loop.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lstm::{GlstmModel, Gradients, LstmParams, OutputHead};
use crate::math::{orthogonal_init, xavier_init, SeededRng};
use crate::optim::{LrGroups, OptimizerSpec, OptimizerState};
use crate::tasks::{Dataset, Sample, Target};
use crate::timegate::{gate_grad, mean_openness, GateParams, TimeAxis};
use crate::{Error, Result};

/// Mean squared error and its gradient w.r.t. the prediction.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len(), "mse length mismatch");
    let len = pred.len() as f64;
    let loss = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / len;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| 2.0 * (p - t) / len)
        .collect();
    (loss, grad)
}

/// Softmax + negative log-likelihood, stabilized by subtracting the max
/// logit. Gradient is `softmax - onehot(label)`.
pub fn cross_entropy_loss(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    assert!(label < logits.len(), "label {label} out of range");
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = z.ln() - (logits[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|&e| e / z).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Average gate openness over all units and steps, with analytic gradients.
/// Minimizing it drives sigma down, closing the gates.
pub fn budget_loss(g: &GateParams, axis: &TimeAxis) -> (f64, Vec<f64>, Vec<f64>) {
    let loss = mean_openness(g, axis);
    let h = g.units();
    let scale = 1.0 / (h * axis.len()) as f64;
    let mut dmu = vec![0.0; h];
    let mut dsigma = vec![0.0; h];
    for &t in axis.values() {
        let (gm, gs) = gate_grad(g, t);
        for j in 0..h {
            dmu[j] += scale * gm[j];
            dsigma[j] += scale * gs[j];
        }
    }
    (loss, dmu, dsigma)
}

/// Forget/input bias initialization targeting long memory: per unit,
/// `b_f = ln(u)` with `u ~ U(1, t_max - 1)` and `b_i = -b_f`.
pub fn chrono_init_biases(p: &mut LstmParams, t_max: usize, rng: &mut SeededRng) {
    assert!(t_max >= 2, "chrono init needs t_max >= 2");
    for j in 0..p.hidden_dim() {
        let u = rng.uniform(1.0, (t_max - 1) as f64);
        p.b_f[j] = u.ln();
        p.b_i[j] = -p.b_f[j];
    }
}

/// Compute-budget term configuration: `L = L_data + lambda * L_budget`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetSpec {
    pub lambda: f64,
    pub enabled: bool,
}

impl BudgetSpec {
    pub fn off() -> Self {
        BudgetSpec {
            lambda: 0.0,
            enabled: false,
        }
    }
}

/// Temporal-curriculum schedule: per epoch, grow the lowest `rho_percent`
/// of the sigma values by `(1 + alpha)`; spend the last `final_epochs`
/// epochs with every sigma pinned at `final_sigma` and the gate frozen.
/// With `gate_lr_zero` set, the gate learning rate is zero for the whole
/// run, so sigma changes come from the schedule alone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSpec {
    pub alpha: f64,
    pub rho_percent: f64,
    pub final_sigma: f64,
    pub final_epochs: usize,
    pub gate_lr_zero: bool,
}

impl CurriculumSpec {
    pub fn in_final_phase(&self, epoch: usize, total_epochs: usize) -> bool {
        epoch + self.final_epochs >= total_epochs
    }
}

/// One schedule step: returns the gate parameters for the given epoch
/// (0-based) of a `total_epochs`-epoch run.
pub fn curriculum_step(
    g: &GateParams,
    spec: &CurriculumSpec,
    epoch: usize,
    total_epochs: usize,
) -> GateParams {
    assert!(spec.alpha > 0.0, "growth factor must be positive");
    assert!(
        spec.rho_percent > 0.0 && spec.rho_percent <= 100.0,
        "rho must be a percentage in (0, 100]"
    );
    let mut out = g.clone();
    if spec.in_final_phase(epoch, total_epochs) {
        for s in &mut out.sigma {
            *s = spec.final_sigma;
        }
    } else {
        let h = g.units();
        let count = ((spec.rho_percent / 100.0) * h as f64).ceil() as usize;
        let mut order: Vec<usize> = (0..h).collect();
        order.sort_by(|&a, &b| out.sigma[a].partial_cmp(&out.sigma[b]).unwrap());
        for &j in order.iter().take(count.min(h)) {
            out.sigma[j] *= 1.0 + spec.alpha;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Gaussian-gated LSTM with trainable gate parameters.
    Glstm,
    /// Plain LSTM baseline, realized as a pinned wide-open gate
    /// (sigma = 1e8, mu = 0, gate learning rate 0); agrees with a gate-free
    /// LSTM to ~1e-9 over desk-scale sequence lengths.
    Lstm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelInit {
    Orthogonal,
    Xavier,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BiasInit {
    /// Forget bias set to a constant (the default is 1).
    Constant { value: f64 },
    /// Chrono initialization with the given time horizon.
    Chrono { t_max: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MuInit {
    Uniform { lo: f64, hi: f64 },
    Constant { value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateInit {
    pub mu: MuInit,
    pub sigma: f64,
}

/// Everything a training run needs besides the data itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: String,
    pub model: ModelKind,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerSpec,
    pub lr: LrGroups,
    pub kernel_init: KernelInit,
    pub forget_bias: BiasInit,
    pub gate_init: GateInit,
    pub candidate_tanh: bool,
    pub budget: BudgetSpec,
    pub curriculum: Option<CurriculumSpec>,
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("hidden size must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.lr.lr_weights < 0.0 || self.lr.lr_gate < 0.0 {
            return Err(Error::Config("learning rates must be nonnegative".into()));
        }
        if !self.budget.lambda.is_finite() || self.budget.lambda < 0.0 {
            return Err(Error::Config("budget lambda must be finite and >= 0".into()));
        }
        if self.gate_init.sigma <= 0.0 {
            return Err(Error::Config("gate sigma init must be positive".into()));
        }
        if let Some(c) = &self.curriculum {
            if c.alpha <= 0.0 || c.rho_percent <= 0.0 || c.rho_percent > 100.0 {
                return Err(Error::Config("invalid curriculum parameters".into()));
            }
        }
        Ok(())
    }
}

/// Distinct RNG substreams derived from one run seed.
mod streams {
    pub const INIT: u64 = 1;
    pub const DATA: u64 = 2;
    pub const SHUFFLE: u64 = 3;
}

/// Builds the model described by the config. All randomness comes from the
/// config seed's init substream.
pub fn build_model(cfg: &TrainConfig, input_dim: usize, out_dim: usize) -> GlstmModel {
    let mut rng = SeededRng::with_stream(cfg.seed, streams::INIT);
    let h = cfg.hidden;
    let kernel = |rows: usize, cols: usize, rng: &mut SeededRng| match cfg.kernel_init {
        KernelInit::Orthogonal => orthogonal_init(rows, cols, rng),
        KernelInit::Xavier => xavier_init(rows, cols, rng),
    };
    let mut params = LstmParams {
        w_xi: kernel(input_dim, h, &mut rng),
        w_hi: kernel(h, h, &mut rng),
        b_i: vec![0.0; h],
        w_xf: kernel(input_dim, h, &mut rng),
        w_hf: kernel(h, h, &mut rng),
        b_f: vec![0.0; h],
        w_xg: kernel(input_dim, h, &mut rng),
        w_hg: kernel(h, h, &mut rng),
        b_g: vec![0.0; h],
        w_xo: kernel(input_dim, h, &mut rng),
        w_ho: kernel(h, h, &mut rng),
        b_o: vec![0.0; h],
    };
    match cfg.forget_bias {
        BiasInit::Constant { value } => params.b_f = vec![value; h],
        BiasInit::Chrono { t_max } => chrono_init_biases(&mut params, t_max, &mut rng),
    }
    let head = OutputHead {
        w_out: kernel(h, out_dim, &mut rng),
        b_out: vec![0.0; out_dim],
    };
    let gate = match cfg.model {
        ModelKind::Lstm => GateParams::constant(h, 0.0, 1e8),
        ModelKind::Glstm => {
            let mu = match cfg.gate_init.mu {
                MuInit::Uniform { lo, hi } => (0..h).map(|_| rng.uniform(lo, hi)).collect(),
                MuInit::Constant { value } => vec![value; h],
            };
            GateParams::new(mu, vec![cfg.gate_init.sigma; h])
        }
    };
    GlstmModel {
        params,
        gate,
        head,
        candidate_tanh: cfg.candidate_tanh,
    }
}

/// Per-epoch metrics row. `test_ler` is present for classification tasks.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_ler: Option<f64>,
    pub mean_openness: f64,
    pub wall_time_s: f64,
}

/// Writes metrics CSV: one row per epoch, floats at 10 significant digits.
pub fn write_metrics_csv<W: Write>(records: &[MetricsRecord], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "epoch,train_loss,test_loss,test_ler,mean_openness,wall_time_s"
    )?;
    for r in records {
        let ler = r.test_ler.map_or(String::new(), |v| format!("{v:.9e}"));
        writeln!(
            w,
            "{},{:.9e},{:.9e},{},{:.9e},{:.9e}",
            r.epoch, r.train_loss, r.test_loss, ler, r.mean_openness, r.wall_time_s
        )?;
    }
    Ok(())
}

/// Loss and gradient for one sample under its target's loss function.
fn sample_loss_grads(
    model: &GlstmModel,
    sample: &Sample,
    input_dim: usize,
    axis: &TimeAxis,
) -> (f64, Gradients) {
    let seq = sample.view(input_dim);
    let (out, trace) = model.forward(&seq, axis);
    let (loss, d_out) = match &sample.target {
        Target::Value(t) => mse_loss(&out, t),
        Target::Class(label) => cross_entropy_loss(&out, *label),
    };
    let result = model.backward(&trace, &d_out);
    (loss, result.grads)
}

/// Mean data loss and gradients over a batch, plus the budget term when
/// enabled. Per-sample work may run in parallel; the reduction is in index
/// order, so results do not depend on the worker count.
pub fn batch_gradients(
    model: &GlstmModel,
    batch: &[&Sample],
    input_dim: usize,
    axis: &TimeAxis,
    budget: &BudgetSpec,
) -> (f64, Gradients) {
    let per_sample: Vec<(f64, Gradients)> = batch
        .par_iter()
        .map(|s| sample_loss_grads(model, s, input_dim, axis))
        .collect();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grads = Gradients::zeros_like(model);
    for (l, g) in &per_sample {
        loss += l * scale;
        grads.add_scaled(g, scale);
    }
    if budget.enabled {
        let (b_loss, dmu, dsigma) = budget_loss(&model.gate, axis);
        loss += budget.lambda * b_loss;
        for j in 0..model.hidden_dim() {
            grads.d_mu[j] += budget.lambda * dmu[j];
            grads.d_sigma[j] += budget.lambda * dsigma[j];
        }
    }
    (loss, grads)
}

/// Mean loss over a dataset and, for classification, the label error rate
/// (fraction of samples whose argmax logit is not the label).
pub fn evaluate(model: &GlstmModel, data: &Dataset) -> (f64, Option<f64>) {
    let axis = TimeAxis::indices(data.seq_len);
    let results: Vec<(f64, Option<bool>)> = data
        .samples
        .par_iter()
        .map(|sample| {
            let out = model.forward_output(&sample.view(data.input_dim), &axis);
            match &sample.target {
                Target::Value(t) => (mse_loss(&out, t).0, None),
                Target::Class(label) => {
                    let (loss, _) = cross_entropy_loss(&out, *label);
                    // Ties break toward the first maximum.
                    let mut argmax = 0;
                    for (i, v) in out.iter().enumerate() {
                        if *v > out[argmax] {
                            argmax = i;
                        }
                    }
                    (loss, Some(argmax != *label))
                }
            }
        })
        .collect();
    let loss = results.iter().map(|(l, _)| l).sum::<f64>() / results.len() as f64;
    let errors: Vec<bool> = results.iter().filter_map(|(_, e)| *e).collect();
    let ler = if errors.is_empty() {
        None
    } else {
        Some(errors.iter().filter(|&&e| e).count() as f64 / errors.len() as f64)
    };
    (loss, ler)
}

/// Owns the model, optimizer state, and schedule through a training run.
pub struct Trainer {
    pub model: GlstmModel,
    pub config: TrainConfig,
    opt_state: OptimizerState,
    shuffle_rng: SeededRng,
    epoch: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig, input_dim: usize, out_dim: usize) -> Result<Self> {
        config.validate()?;
        let model = build_model(&config, input_dim, out_dim);
        let opt_state = OptimizerState::new(config.optimizer, &model);
        let shuffle_rng = SeededRng::with_stream(config.seed, streams::SHUFFLE);
        Ok(Trainer {
            model,
            config,
            opt_state,
            shuffle_rng,
            epoch: 0,
        })
    }

    /// Data-generation substream for this run's seed.
    pub fn data_rng(&self) -> SeededRng {
        SeededRng::with_stream(self.config.seed, streams::DATA)
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Whether the curriculum has entered its frozen final phase.
    pub fn in_final_phase(&self) -> bool {
        self.config
            .curriculum
            .map(|c| c.in_final_phase(self.epoch, self.config.epochs))
            .unwrap_or(false)
    }

    fn effective_lr(&self) -> LrGroups {
        let mut lr = self.config.lr;
        if self.config.model == ModelKind::Lstm {
            lr.lr_gate = 0.0;
        }
        if let Some(c) = &self.config.curriculum {
            if c.gate_lr_zero || c.in_final_phase(self.epoch, self.config.epochs) {
                lr.lr_gate = 0.0;
            }
        }
        lr
    }

    /// Runs one epoch of minibatch training, then evaluates on the test
    /// set. Fails with a numeric error if a loss or gradient goes
    /// non-finite.
    pub fn train_epoch(&mut self, train: &Dataset, test: &Dataset) -> Result<MetricsRecord> {
        let started = Instant::now();
        if let Some(cur) = self.config.curriculum {
            // The final phase pins sigma before the epoch trains; growth is
            // applied at the end of each earlier epoch.
            if cur.in_final_phase(self.epoch, self.config.epochs) {
                self.model.gate =
                    curriculum_step(&self.model.gate, &cur, self.epoch, self.config.epochs);
            }
        }
        let axis = TimeAxis::indices(train.seq_len);
        let mut order: Vec<usize> = (0..train.len()).collect();
        self.shuffle_rng.shuffle(&mut order);

        let lr = self.effective_lr();
        let mut train_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train.samples[i]).collect();
            let (loss, mut grads) = batch_gradients(
                &self.model,
                &batch,
                train.input_dim,
                &axis,
                &self.config.budget,
            );
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss or gradient in epoch {}",
                    self.epoch
                )));
            }
            if let Some(max_norm) = self.config.grad_clip {
                let norm = grads.global_norm();
                if norm > max_norm {
                    grads.scale(max_norm / norm);
                }
            }
            self.opt_state.apply(&mut self.model, &grads, &lr);
            train_loss += loss;
            batches += 1;
        }
        train_loss /= batches.max(1) as f64;

        if let Some(cur) = self.config.curriculum {
            if !cur.in_final_phase(self.epoch, self.config.epochs) {
                self.model.gate =
                    curriculum_step(&self.model.gate, &cur, self.epoch, self.config.epochs);
            }
        }

        let (test_loss, test_ler) = evaluate(&self.model, test);
        if !test_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite test loss in epoch {}",
                self.epoch
            )));
        }
        let openness = mean_openness(&self.model.gate, &TimeAxis::indices(test.seq_len));
        let record = MetricsRecord {
            epoch: self.epoch,
            train_loss,
            test_loss,
            test_ler,
            mean_openness: openness,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        self.epoch += 1;
        Ok(record)
    }
}

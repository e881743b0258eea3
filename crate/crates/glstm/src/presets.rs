//! Named experiment presets. Each preset fully populates a training
//! configuration and a dataset specification, so an experiment is one
//! CLI invocation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::optim::{LrGroups, OptimizerSpec};
use crate::training::{
    BiasInit, BudgetSpec, CurriculumSpec, GateInit, KernelInit, ModelKind, MuInit, TrainConfig,
};
use crate::{Error, Result};

/// Where a run's data comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSpec {
    /// Synthetic adding task: a fresh training set is generated every epoch
    /// from the run seed; the test set is fixed.
    Adding {
        n: usize,
        train_per_epoch: usize,
        test_count: usize,
    },
    /// IDX image/label file pairs flattened to scalar sequences, with an
    /// optional fixed permutation of the 784 positions.
    Mnist {
        images: Option<PathBuf>,
        labels: Option<PathBuf>,
        test_images: Option<PathBuf>,
        test_labels: Option<PathBuf>,
        permute_seed: Option<u64>,
        train_limit: Option<usize>,
        test_limit: Option<usize>,
    },
}

/// A fully resolved run: training config, data source, and outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: String,
    pub train: TrainConfig,
    pub data: DataSpec,
    pub out_dir: PathBuf,
    pub checkpoint_interval: usize,
    pub threads: Option<usize>,
}

pub const PRESET_NAMES: &[&str] = &[
    "adding-1000",
    "adding-2000",
    "smnist",
    "pmnist",
    "smnist-budgeted-0.1",
    "smnist-budgeted-1",
    "smnist-budgeted-10",
    "curriculum",
    "adding-narrow-sigma",
    "adding-early-window",
    "adding-late-window",
    "chrono-784",
    "chrono-250",
    "size-25",
    "size-110",
    "size-220",
];

fn adding_train(hidden: usize, mu: MuInit, sigma: f64, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        task: "adding".into(),
        model: ModelKind::Glstm,
        hidden,
        epochs,
        batch_size: 50,
        optimizer: OptimizerSpec::adam(),
        lr: LrGroups {
            lr_weights: 1e-3,
            lr_gate: 1.0,
        },
        kernel_init: KernelInit::Orthogonal,
        forget_bias: BiasInit::Constant { value: 1.0 },
        gate_init: GateInit { mu, sigma },
        candidate_tanh: false,
        budget: BudgetSpec::off(),
        curriculum: None,
        grad_clip: None,
        seed,
    }
}

fn smnist_train(hidden: usize, sigma: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        task: "smnist".into(),
        model: ModelKind::Glstm,
        hidden,
        epochs: 100,
        batch_size: 50,
        optimizer: OptimizerSpec::rmsprop(0.5),
        lr: LrGroups {
            lr_weights: 1e-3,
            lr_gate: 1.0,
        },
        kernel_init: KernelInit::Orthogonal,
        forget_bias: BiasInit::Constant { value: 1.0 },
        gate_init: GateInit {
            mu: MuInit::Uniform { lo: 1.0, hi: 784.0 },
            sigma,
        },
        candidate_tanh: false,
        budget: BudgetSpec::off(),
        curriculum: None,
        grad_clip: None,
        seed,
    }
}

fn adding_data(n: usize) -> DataSpec {
    DataSpec::Adding {
        n,
        train_per_epoch: 5000,
        test_count: 5000,
    }
}

fn mnist_data(permute_seed: Option<u64>) -> DataSpec {
    DataSpec::Mnist {
        images: None,
        labels: None,
        test_images: None,
        test_labels: None,
        permute_seed,
        train_limit: None,
        test_limit: None,
    }
}

/// Builds the named preset with the given seed. Unknown names list the
/// catalog in the error.
pub fn build_preset(name: &str, seed: u64) -> Result<(TrainConfig, DataSpec)> {
    let preset = match name {
        "adding-1000" => (
            adding_train(
                110,
                MuInit::Uniform {
                    lo: 300.0,
                    hi: 700.0,
                },
                40.0,
                700,
                seed,
            ),
            adding_data(1000),
        ),
        "adding-2000" => (
            adding_train(
                110,
                MuInit::Uniform {
                    lo: 500.0,
                    hi: 1500.0,
                },
                40.0,
                700,
                seed,
            ),
            adding_data(2000),
        ),
        // Extreme gate initializations for the gate-trainability studies.
        "adding-narrow-sigma" => (
            adding_train(
                110,
                MuInit::Uniform {
                    lo: 300.0,
                    hi: 700.0,
                },
                1.0,
                700,
                seed,
            ),
            adding_data(1000),
        ),
        "adding-early-window" => (
            adding_train(110, MuInit::Uniform { lo: 0.0, hi: 400.0 }, 40.0, 700, seed),
            adding_data(1000),
        ),
        "adding-late-window" => (
            adding_train(
                110,
                MuInit::Uniform {
                    lo: 600.0,
                    hi: 1000.0,
                },
                40.0,
                700,
                seed,
            ),
            adding_data(1000),
        ),
        "smnist" => (smnist_train(110, 250.0, seed), mnist_data(None)),
        "pmnist" => (
            {
                let mut cfg = smnist_train(110, 250.0, seed);
                cfg.task = "pmnist".into();
                cfg
            },
            mnist_data(Some(seed)),
        ),
        "smnist-budgeted-0.1" | "smnist-budgeted-1" | "smnist-budgeted-10" => {
            let lambda = match name {
                "smnist-budgeted-0.1" => 0.1,
                "smnist-budgeted-1" => 1.0,
                _ => 10.0,
            };
            let mut cfg = smnist_train(110, 50.0, seed);
            cfg.budget = BudgetSpec {
                lambda,
                enabled: true,
            };
            (cfg, mnist_data(None))
        }
        "curriculum" => {
            let mut cfg = smnist_train(110, 50.0, seed);
            cfg.curriculum = Some(CurriculumSpec {
                alpha: 1.0 / 6.0,
                rho_percent: 15.0,
                final_sigma: 5000.0,
                final_epochs: 10,
                gate_lr_zero: true,
            });
            (cfg, mnist_data(None))
        }
        "chrono-784" | "chrono-250" => {
            let t_max = if name == "chrono-784" { 784 } else { 250 };
            let mut cfg = smnist_train(110, 250.0, seed);
            cfg.forget_bias = BiasInit::Chrono { t_max };
            (cfg, mnist_data(None))
        }
        "size-25" => (smnist_train(25, 250.0, seed), mnist_data(None)),
        "size-110" => (smnist_train(110, 250.0, seed), mnist_data(None)),
        "size-220" => (smnist_train(220, 250.0, seed), mnist_data(None)),
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}'; available: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(preset)
}

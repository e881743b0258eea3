//! Command-line entry point: `train`, `eval`, `gradnorm`, `export-gate`,
//! `gen-data`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data/checkpoint error,
//! 4 numeric failure (non-finite values during training or evaluation).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::checkpoint;
use crate::diagnostics::{gradient_norms, op_count_report, write_gradnorm_csv};
use crate::lstm::GlstmModel;
use crate::presets::{build_preset, DataSpec, RunConfig};
use crate::tasks::{
    adding_to_dataset, gen_adding_batch, load_mnist_idx, permute_dataset, sequences_to_dataset,
    write_adding_csv, Dataset, Target,
};
use crate::timegate::{write_openness_csv, TimeAxis};
use crate::training::{evaluate, write_metrics_csv, MetricsRecord, ModelKind, Trainer};
use crate::{write_atomic, Error, Result};

/// Environment variable naming the default directory for IDX files.
pub const DATA_DIR_ENV: &str = "GLSTM_DATA_DIR";

#[derive(Parser)]
#[command(name = "glstm", version, about = "Gaussian-gated LSTM experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training experiment from a preset or config file.
    Train(Box<TrainArgs>),
    /// Evaluate a checkpoint, optionally with threshold-skipped inference.
    Eval(EvalArgs),
    /// Export the per-timestep gradient-norm profile of a checkpoint.
    Gradnorm(GradnormArgs),
    /// Export a checkpoint's gate-openness map as CSV.
    ExportGate(ExportGateArgs),
    /// Generate an adding-task dataset as CSV.
    GenData(GenDataArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Preset name (see `--preset help` for the catalog).
    #[arg(long)]
    preset: Option<String>,
    /// TOML run-config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for metrics, checkpoints, and the config echo.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// `glstm` or `lstm` (pinned wide-open gate).
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    candidate_tanh: bool,
    /// Budget weight; a positive value enables the budget term.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    gate_lr: Option<f64>,
    #[arg(long)]
    grad_clip: Option<f64>,
    /// Gate mu init: lower bound of the uniform range.
    #[arg(long)]
    mu_lo: Option<f64>,
    /// Gate mu init: upper bound of the uniform range.
    #[arg(long)]
    mu_hi: Option<f64>,
    /// Gate sigma init (all units).
    #[arg(long)]
    gate_sigma: Option<f64>,
    /// Cap on rayon worker threads; does not change results.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    checkpoint_interval: Option<usize>,
    /// Adding task: sequence length override.
    #[arg(long)]
    n: Option<usize>,
    /// Adding task: fresh training samples per epoch.
    #[arg(long)]
    train_samples: Option<usize>,
    /// Adding task: fixed test-set size.
    #[arg(long)]
    test_samples: Option<usize>,
    #[command(flatten)]
    mnist: MnistArgs,
}

#[derive(Args, Clone)]
struct MnistArgs {
    /// Directory holding the conventional IDX file names; overrides
    /// $GLSTM_DATA_DIR.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    test_images: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    #[arg(long)]
    permute_seed: Option<u64>,
    #[arg(long)]
    train_limit: Option<usize>,
    #[arg(long)]
    test_limit: Option<usize>,
}

#[derive(Args)]
struct EvalDataArgs {
    /// `adding` or `smnist`/`pmnist`.
    #[arg(long)]
    task: String,
    /// Adding task: sequence length.
    #[arg(long)]
    n: Option<usize>,
    /// Adding task: sample count.
    #[arg(long, default_value_t = 1000)]
    count: usize,
    /// Adding task: generation seed.
    #[arg(long, default_value_t = 999)]
    data_seed: u64,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    permute_seed: Option<u64>,
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: EvalDataArgs,
    /// Skip threshold; when given, inference copies a unit's state at
    /// steps where its gate value is at or below this.
    #[arg(long)]
    v_t: Option<f64>,
    /// Write the op-count report JSON here instead of stdout.
    #[arg(long)]
    op_report: Option<PathBuf>,
}

#[derive(Args)]
struct GradnormArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: EvalDataArgs,
    /// Number of samples to average over.
    #[arg(long)]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportGateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Number of time steps (columns) in the exported map.
    #[arg(long)]
    t: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Parses the process arguments, runs the selected command, and returns
/// the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(*args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gradnorm(args) => cmd_gradnorm(args),
        Command::ExportGate(args) => cmd_export_gate(args),
        Command::GenData(args) => cmd_gen_data(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                Error::Io(_) | Error::Format(_) => 3,
                Error::Numeric(_) => 4,
            }
        }
    }
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // Ignore the error if a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn default_data_dir(explicit: Option<&Path>) -> Option<PathBuf> {
    explicit
        .map(PathBuf::from)
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
}

fn require_file(path: Option<PathBuf>, fallback: Option<&Path>, name: &str) -> Result<PathBuf> {
    let resolved = path.or_else(|| fallback.map(|dir| dir.join(name)));
    match resolved {
        Some(p) if p.is_file() => Ok(p),
        Some(p) => Err(Error::Config(format!(
            "missing dataset path: {}",
            p.display()
        ))),
        None => Err(Error::Config(format!(
            "no path given for {name}; pass the flag or set ${DATA_DIR_ENV}"
        ))),
    }
}

fn load_mnist_pair(
    images: Option<PathBuf>,
    labels: Option<PathBuf>,
    data_dir: Option<&Path>,
    default_images: &str,
    default_labels: &str,
    permute_seed: Option<u64>,
    limit: Option<usize>,
) -> Result<Dataset> {
    let images = require_file(images, data_dir, default_images)?;
    let labels = require_file(labels, data_dir, default_labels)?;
    let mut data = load_mnist_idx(&images, &labels)?;
    if let Some(lim) = limit {
        data.truncate(lim);
    }
    if data.is_empty() {
        return Err(Error::Format(format!("{} holds no samples", images.display())));
    }
    if let Some(seed) = permute_seed {
        let spec = crate::tasks::PermutationSpec::from_seed(seed, data[0].features.len());
        data = permute_dataset(&data, &spec);
    }
    Ok(sequences_to_dataset(&data, 10))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    init_threads(args.threads);
    let seed = args.seed.unwrap_or(0);

    let mut run: RunConfig = if let Some(config_path) = &args.config {
        let text = fs::read_to_string(config_path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("config file: {e}")))?
    } else {
        let preset_name = args
            .preset
            .clone()
            .ok_or_else(|| Error::Config("pass --preset or --config".into()))?;
        let (train, data) = build_preset(&preset_name, seed)?;
        RunConfig {
            preset: preset_name,
            train,
            data,
            out_dir: args.out.clone(),
            checkpoint_interval: 50,
            threads: args.threads,
        }
    };

    // Flag overrides.
    run.out_dir = args.out.clone();
    if let Some(seed) = args.seed {
        run.train.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        run.train.epochs = epochs;
    }
    if let Some(hidden) = args.hidden {
        run.train.hidden = hidden;
    }
    if let Some(batch) = args.batch_size {
        run.train.batch_size = batch;
    }
    if args.candidate_tanh {
        run.train.candidate_tanh = true;
    }
    if let Some(model) = &args.model {
        run.train.model = match model.as_str() {
            "glstm" => ModelKind::Glstm,
            "lstm" => ModelKind::Lstm,
            other => {
                return Err(Error::Config(format!(
                    "unknown model '{other}' (expected glstm or lstm)"
                )))
            }
        };
    }
    if let Some(lambda) = args.lambda {
        run.train.budget.lambda = lambda;
        run.train.budget.enabled = lambda > 0.0;
    }
    if let Some(lr) = args.lr {
        run.train.lr.lr_weights = lr;
    }
    if let Some(gate_lr) = args.gate_lr {
        run.train.lr.lr_gate = gate_lr;
    }
    if let Some(clip) = args.grad_clip {
        run.train.grad_clip = Some(clip);
    }
    if let (Some(lo), Some(hi)) = (args.mu_lo, args.mu_hi) {
        run.train.gate_init.mu = crate::training::MuInit::Uniform { lo, hi };
    }
    if let Some(sigma) = args.gate_sigma {
        run.train.gate_init.sigma = sigma;
    }
    if let Some(interval) = args.checkpoint_interval {
        run.checkpoint_interval = interval;
    }
    match &mut run.data {
        DataSpec::Adding {
            n,
            train_per_epoch,
            test_count,
        } => {
            if let Some(len) = args.n {
                *n = len;
            }
            if let Some(count) = args.train_samples {
                *train_per_epoch = count;
            }
            if let Some(count) = args.test_samples {
                *test_count = count;
            }
        }
        DataSpec::Mnist {
            images,
            labels,
            test_images,
            test_labels,
            permute_seed,
            train_limit,
            test_limit,
        } => {
            let m = &args.mnist;
            if m.images.is_some() {
                *images = m.images.clone();
            }
            if m.labels.is_some() {
                *labels = m.labels.clone();
            }
            if m.test_images.is_some() {
                *test_images = m.test_images.clone();
            }
            if m.test_labels.is_some() {
                *test_labels = m.test_labels.clone();
            }
            if m.permute_seed.is_some() {
                *permute_seed = m.permute_seed;
            }
            if m.train_limit.is_some() {
                *train_limit = m.train_limit;
            }
            if m.test_limit.is_some() {
                *test_limit = m.test_limit;
            }
        }
    }
    run.train.validate()?;

    fs::create_dir_all(&run.out_dir)?;
    write_atomic(
        &run.out_dir.join("config.json"),
        serde_json::to_string_pretty(&run)
            .expect("config serialization cannot fail")
            .as_bytes(),
    )?;

    match run.data.clone() {
        DataSpec::Adding {
            n,
            train_per_epoch,
            test_count,
        } => train_adding(&run, n, train_per_epoch, test_count),
        DataSpec::Mnist {
            images,
            labels,
            test_images,
            test_labels,
            permute_seed,
            train_limit,
            test_limit,
        } => {
            let dir = default_data_dir(args.mnist.data_dir.as_deref());
            let train_set = load_mnist_pair(
                images,
                labels,
                dir.as_deref(),
                "train-images-idx3-ubyte",
                "train-labels-idx1-ubyte",
                permute_seed,
                train_limit,
            )?;
            let test_set = load_mnist_pair(
                test_images,
                test_labels,
                dir.as_deref(),
                "t10k-images-idx3-ubyte",
                "t10k-labels-idx1-ubyte",
                permute_seed,
                test_limit,
            )?;
            train_loop(&run, train_set, Some(test_set))
        }
    }
}

fn train_adding(run: &RunConfig, n: usize, train_per_epoch: usize, test_count: usize) -> Result<()> {
    let mut trainer = Trainer::new(run.train.clone(), 2, 1)?;
    let mut data_rng = trainer.data_rng();
    let test = adding_to_dataset(&gen_adding_batch(&mut data_rng, n, test_count));
    let mut records = Vec::new();
    for epoch in 0..run.train.epochs {
        let train = adding_to_dataset(&gen_adding_batch(&mut data_rng, n, train_per_epoch));
        let record = trainer.train_epoch(&train, &test)?;
        records.push(record);
        write_outputs(run, &trainer, &records, epoch)?;
    }
    finalize(run, &trainer, &records)
}

fn train_loop(run: &RunConfig, train: Dataset, test: Option<Dataset>) -> Result<()> {
    let test = test.unwrap_or_else(|| train.clone());
    let mut trainer = Trainer::new(run.train.clone(), train.input_dim, 10)?;
    let mut records = Vec::new();
    for epoch in 0..run.train.epochs {
        let record = trainer.train_epoch(&train, &test)?;
        records.push(record);
        write_outputs(run, &trainer, &records, epoch)?;
    }
    finalize(run, &trainer, &records)
}

fn write_outputs(
    run: &RunConfig,
    trainer: &Trainer,
    records: &[MetricsRecord],
    epoch: usize,
) -> Result<()> {
    let mut csv = Vec::new();
    write_metrics_csv(records, &mut csv)?;
    write_atomic(&run.out_dir.join("metrics.csv"), &csv)?;
    if run.checkpoint_interval > 0 && (epoch + 1).is_multiple_of(run.checkpoint_interval) {
        checkpoint::save(
            &trainer.model,
            &run.out_dir.join(format!("checkpoint_epoch_{epoch}.json")),
        )?;
    }
    Ok(())
}

fn finalize(run: &RunConfig, trainer: &Trainer, records: &[MetricsRecord]) -> Result<()> {
    checkpoint::save(&trainer.model, &run.out_dir.join("checkpoint.json"))?;
    let last = records.last();
    let summary = serde_json::json!({
        "final_loss": last.map(|r| r.test_loss),
        "final_ler": last.and_then(|r| r.test_ler),
        "mean_openness": last.map(|r| r.mean_openness),
        "epochs": records.len(),
    });
    write_atomic(
        &run.out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).unwrap().as_bytes(),
    )?;
    if let Some(r) = last {
        match r.test_ler {
            Some(ler) => println!(
                "final test loss {:.6e}, ler {:.4}, mean openness {:.4}",
                r.test_loss, ler, r.mean_openness
            ),
            None => println!(
                "final test loss {:.6e}, mean openness {:.4}",
                r.test_loss, r.mean_openness
            ),
        }
    }
    Ok(())
}

fn eval_dataset(args: &EvalDataArgs) -> Result<Dataset> {
    match args.task.as_str() {
        "adding" => {
            let n = args
                .n
                .ok_or_else(|| Error::Config("adding task needs --n".into()))?;
            let mut rng = crate::math::SeededRng::with_stream(args.data_seed, 2);
            Ok(adding_to_dataset(&gen_adding_batch(&mut rng, n, args.count)))
        }
        "smnist" | "pmnist" => {
            let dir = default_data_dir(args.data_dir.as_deref());
            let permute = if args.task == "pmnist" {
                Some(args.permute_seed.unwrap_or(args.data_seed))
            } else {
                args.permute_seed
            };
            load_mnist_pair(
                args.images.clone(),
                args.labels.clone(),
                dir.as_deref(),
                "t10k-images-idx3-ubyte",
                "t10k-labels-idx1-ubyte",
                permute,
                args.limit,
            )
        }
        other => Err(Error::Config(format!(
            "unknown task '{other}' (expected adding, smnist, or pmnist)"
        ))),
    }
}

fn load_model(path: &Path) -> Result<GlstmModel> {
    checkpoint::load(path)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let model = load_model(&args.checkpoint)?;
    let data = eval_dataset(&args.data)?;
    if data.input_dim != model.input_dim() {
        return Err(Error::Config(format!(
            "checkpoint expects input dim {}, dataset has {}",
            model.input_dim(),
            data.input_dim
        )));
    }
    match args.v_t {
        None => {
            let (loss, ler) = evaluate(&model, &data);
            if !loss.is_finite() {
                return Err(Error::Numeric("evaluation produced non-finite loss".into()));
            }
            match ler {
                Some(l) => println!("loss {loss:.10e} ler {l:.6}"),
                None => println!("loss {loss:.10e}"),
            }
        }
        Some(v_t) => {
            if !(0.0..1.0).contains(&v_t) {
                return Err(Error::Config("threshold must be in [0, 1)".into()));
            }
            let axis = TimeAxis::indices(data.seq_len);
            let results: Vec<(f64, Option<bool>, usize, usize)> = data
                .samples
                .par_iter()
                .map(|sample| {
                    let (out, stats) =
                        model.forward_thresholded(&sample.view(data.input_dim), &axis, v_t);
                    let (loss, wrong) = match &sample.target {
                        Target::Value(t) => (crate::training::mse_loss(&out, t).0, None),
                        Target::Class(label) => {
                            let (loss, _) = crate::training::cross_entropy_loss(&out, *label);
                            let mut argmax = 0;
                            for (i, v) in out.iter().enumerate() {
                                if *v > out[argmax] {
                                    argmax = i;
                                }
                            }
                            (loss, Some(argmax != *label))
                        }
                    };
                    (loss, wrong, stats.updated, stats.total)
                })
                .collect();
            let loss = results.iter().map(|(l, ..)| l).sum::<f64>() / results.len() as f64;
            if !loss.is_finite() {
                return Err(Error::Numeric("evaluation produced non-finite loss".into()));
            }
            let wrongs: Vec<bool> = results.iter().filter_map(|(_, w, ..)| *w).collect();
            let updated: usize = results.iter().map(|(_, _, u, _)| u).sum();
            let total: usize = results.iter().map(|(_, _, _, t)| t).sum();
            let open_fraction = updated as f64 / total as f64;
            match wrongs.is_empty() {
                true => println!("loss {loss:.10e}"),
                false => {
                    let ler = wrongs.iter().filter(|&&w| w).count() as f64 / wrongs.len() as f64;
                    println!("loss {loss:.10e} ler {ler:.6}");
                }
            }
            println!("open fraction {open_fraction:.6} ({updated}/{total} unit-steps updated)");
            let report = op_count_report(
                data.seq_len as u64,
                model.hidden_dim() as u64,
                model.input_dim() as u64,
                open_fraction,
            );
            let json = serde_json::to_string_pretty(&report).unwrap();
            match &args.op_report {
                Some(path) => write_atomic(path, json.as_bytes())?,
                None => println!("{json}"),
            }
        }
    }
    Ok(())
}

fn cmd_gradnorm(args: GradnormArgs) -> Result<()> {
    if args.samples == 0 {
        return Err(Error::Config("sample count must be positive".into()));
    }
    let model = load_model(&args.checkpoint)?;
    let data = eval_dataset(&args.data)?;
    let profile = gradient_norms(&model, &data, args.samples);
    let mut csv = Vec::new();
    write_gradnorm_csv(&profile, &mut csv)?;
    write_atomic(&args.out, &csv)?;
    println!("wrote {} rows to {}", profile.values.len(), args.out.display());
    Ok(())
}

fn cmd_export_gate(args: ExportGateArgs) -> Result<()> {
    if args.t == 0 {
        return Err(Error::Config("step count must be positive".into()));
    }
    let model = load_model(&args.checkpoint)?;
    let axis = TimeAxis::indices(args.t);
    let mut csv = Vec::new();
    write_openness_csv(&model.gate, &axis, &mut csv)?;
    write_atomic(&args.out, &csv)?;
    println!(
        "wrote {} x {} openness map to {}",
        model.hidden_dim(),
        args.t,
        args.out.display()
    );
    Ok(())
}

fn cmd_gen_data(args: GenDataArgs) -> Result<()> {
    if args.n < 2 {
        return Err(Error::Config("adding task needs --n >= 2".into()));
    }
    let mut rng = crate::math::SeededRng::with_stream(args.seed, 2);
    let samples = gen_adding_batch(&mut rng, args.n, args.count);
    let mut csv = Vec::new();
    write_adding_csv(&samples, &mut csv)?;
    write_atomic(&args.out, &csv)?;
    println!("wrote {} samples to {}", args.count, args.out.display());
    Ok(())
}
